// Copyright 2025-present the biomine authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "biomine/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace biomine {

namespace {
using nlohmann::json;
using nlohmann::ordered_json;

constexpr char kFieldSep = '\x1f';
constexpr char kRecordSep = '\x1e';
}  // namespace

std::string fingerprint(const ChatRequest& request) {
  uint64_t h = kFnvOffset;
  auto mix = [&](std::string_view s) {
    h = fnv1a64(s, h);
    h = fnv1a64(std::string_view(&kFieldSep, 1), h);
  };
  mix("chat");
  mix(request.model);
  for (const auto& m : request.messages) {
    mix(m.role);
    mix(m.content);
    h = fnv1a64(std::string_view(&kRecordSep, 1), h);
  }
  mix(request.response_schema.value_or(""));
  return to_hex(h);
}

std::string fingerprint_embed(const std::string& text, const std::string& model) {
  uint64_t h = kFnvOffset;
  h = fnv1a64("embed", h);
  h = fnv1a64(std::string_view(&kFieldSep, 1), h);
  h = fnv1a64(model, h);
  h = fnv1a64(std::string_view(&kFieldSep, 1), h);
  h = fnv1a64(text, h);
  return to_hex(h);
}

void l2_normalize(std::vector<float>& v) {
  double norm_sq = 0.0;
  for (float x : v) norm_sq += static_cast<double>(x) * static_cast<double>(x);
  if (norm_sq <= 0.0) return;
  const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
  for (float& x : v) x *= inv;
}

ChatResponse CallbackBackend::complete(const ChatRequest& request) {
  ChatResponse r;
  r.content = chat_(request);
  // Rough but deterministic usage accounting for scripted backends.
  for (const auto& m : request.messages) r.prompt_tokens += static_cast<int64_t>(m.content.size() / 4);
  r.completion_tokens = static_cast<int64_t>(r.content.size() / 4);
  r.backend_id = id_;
  return r;
}

std::vector<std::vector<float>> CallbackBackend::embed(const std::vector<std::string>& texts,
                                                       const std::string& model) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_(t, model));
  return out;
}

std::shared_ptr<Backend> make_fail_backend() {
  return std::make_shared<CallbackBackend>(
      "fail",
      [](const ChatRequest&) -> std::string {
        throw Error("fail backend: live call attempted");
      },
      [](const std::string&, const std::string&) -> std::vector<float> {
        throw Error("fail backend: live embedding attempted");
      });
}

// --- ReplayStore ----------------------------------------------------------

ReplayStore::ReplayStore(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // fresh store
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("fingerprint")) {
      throw Error(path_ + ": line " + std::to_string(line_no) + ": bad replay record");
    }
    std::string fp = rec["fingerprint"].get<std::string>();
    std::string kind = rec.value("kind", "chat");
    if (kind == "chat") {
      ChatResponse r;
      const auto& resp = rec.at("response");
      r.content = resp.at("content").get<std::string>();
      r.prompt_tokens = resp.value("prompt_tokens", 0);
      r.completion_tokens = resp.value("completion_tokens", 0);
      r.backend_id = resp.value("backend_id", "");
      chat_[fp] = std::move(r);
    } else if (kind == "embed") {
      embeddings_[fp] = rec.at("vector").get<std::vector<float>>();
    } else {
      throw Error(path_ + ": line " + std::to_string(line_no) + ": unknown kind " + kind);
    }
  }
}

std::optional<ChatResponse> ReplayStore::get_chat(const std::string& fp) const {
  std::lock_guard lock(mutex_);
  auto it = chat_.find(fp);
  if (it == chat_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::vector<float>> ReplayStore::get_embedding(const std::string& fp) const {
  std::lock_guard lock(mutex_);
  auto it = embeddings_.find(fp);
  if (it == embeddings_.end()) return std::nullopt;
  return it->second;
}

void ReplayStore::put_chat(const std::string& fp, const ChatResponse& response) {
  std::lock_guard lock(mutex_);
  if (chat_.count(fp)) return;
  chat_[fp] = response;
  ordered_json rec;
  rec["fingerprint"] = fp;
  rec["kind"] = "chat";
  rec["response"] = {{"content", response.content},
                     {"prompt_tokens", response.prompt_tokens},
                     {"completion_tokens", response.completion_tokens},
                     {"backend_id", response.backend_id}};
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("replay store: cannot append to " + path_);
  out << rec.dump() << "\n";
}

void ReplayStore::put_embedding(const std::string& fp, const std::vector<float>& vector) {
  std::lock_guard lock(mutex_);
  if (embeddings_.count(fp)) return;
  embeddings_[fp] = vector;
  ordered_json rec;
  rec["fingerprint"] = fp;
  rec["kind"] = "embed";
  rec["vector"] = vector;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("replay store: cannot append to " + path_);
  out << rec.dump() << "\n";
}

std::size_t ReplayStore::size() const {
  std::lock_guard lock(mutex_);
  return chat_.size() + embeddings_.size();
}

std::optional<ReplayMode> replay_mode_from_string(const std::string& s) {
  if (s == "record") return ReplayMode::kRecord;
  if (s == "replay") return ReplayMode::kReplay;
  if (s == "strict-replay") return ReplayMode::kStrictReplay;
  return std::nullopt;
}

// --- Gateway ---------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<ReplayStore> store,
                 GatewayConfig config)
    : backend_(std::move(backend)), store_(std::move(store)), config_(config) {
  if (config_.max_concurrency < 1) throw Error("gateway: max_concurrency must be >= 1");
  if (config_.mode != ReplayMode::kStrictReplay && !backend_) {
    throw Error("gateway: live backend required outside strict-replay mode");
  }
  if (config_.mode != ReplayMode::kRecord && !store_ && config_.mode == ReplayMode::kStrictReplay) {
    throw Error("gateway: strict-replay mode requires a replay store");
  }
}

// RAII slot under the concurrency bound; only live backend traffic holds one.
class Gateway::Slot {
 public:
  explicit Slot(Gateway& g) : g_(g) {
    std::unique_lock lock(g_.slot_mutex_);
    g_.slot_cv_.wait(lock, [&] { return g_.in_flight_ < g_.config_.max_concurrency; });
    g_.in_flight_++;
    int64_t now = g_.in_flight_;
    int64_t seen = g_.stats_.max_in_flight.load();
    while (now > seen && !g_.stats_.max_in_flight.compare_exchange_weak(seen, now)) {
    }
  }
  ~Slot() {
    {
      std::lock_guard lock(g_.slot_mutex_);
      g_.in_flight_--;
    }
    g_.slot_cv_.notify_one();
  }

 private:
  Gateway& g_;
};

ChatResponse Gateway::complete(const ChatRequest& request) {
  if (request.messages.empty()) throw Error("gateway: request has no messages");
  if (request.temperature < 0.0) throw Error("gateway: negative temperature");
  stats_.chat_calls++;
  stats_.issued++;
  try {
    const std::string fp = fingerprint(request);
    if (store_) {
      if (auto hit = store_->get_chat(fp)) {
        stats_.replay_hits++;
        stats_.prompt_tokens += hit->prompt_tokens;
        stats_.completion_tokens += hit->completion_tokens;
        stats_.completed++;
        return *hit;
      }
    }
    if (config_.mode == ReplayMode::kStrictReplay) {
      throw Error("strict-replay miss: fingerprint " + fp);
    }
    ChatResponse response;
    {
      Slot slot(*this);
      stats_.live_calls++;
      response = backend_->complete(request);
    }
    stats_.prompt_tokens += response.prompt_tokens;
    stats_.completion_tokens += response.completion_tokens;
    if (config_.mode == ReplayMode::kRecord && store_) {
      store_->put_chat(fp, response);
    }
    stats_.completed++;
    return response;
  } catch (...) {
    stats_.failed++;
    throw;
  }
}

std::vector<std::vector<float>> Gateway::embed(const std::vector<std::string>& texts,
                                               const std::string& model) {
  if (texts.empty()) throw Error("gateway: embed requires at least one text");
  stats_.issued++;
  try {
    std::vector<std::vector<float>> out(texts.size());
    std::vector<size_t> missing;
    std::map<std::string, size_t> first_in_batch;  // dedup repeated texts
    std::vector<size_t> alias_of(texts.size(), SIZE_MAX);
    for (size_t i = 0; i < texts.size(); ++i) {
      const std::string fp = fingerprint_embed(texts[i], model);
      if (store_) {
        if (auto hit = store_->get_embedding(fp)) {
          out[i] = std::move(*hit);
          continue;
        }
      }
      auto it = first_in_batch.find(fp);
      if (it != first_in_batch.end()) {
        alias_of[i] = it->second;
        continue;
      }
      first_in_batch[fp] = i;
      missing.push_back(i);
    }
    if (!missing.empty()) {
      if (config_.mode == ReplayMode::kStrictReplay) {
        throw Error("strict-replay miss: embedding fingerprint " +
                    fingerprint_embed(texts[missing.front()], model));
      }
      std::vector<std::string> batch;
      batch.reserve(missing.size());
      for (size_t i : missing) batch.push_back(texts[i]);
      std::vector<std::vector<float>> fresh;
      {
        Slot slot(*this);
        stats_.live_calls++;
        fresh = backend_->embed(batch, model);
      }
      if (fresh.size() != batch.size()) {
        throw Error("gateway: embedding backend returned " + std::to_string(fresh.size()) +
                    " vectors for " + std::to_string(batch.size()) + " inputs");
      }
      for (size_t k = 0; k < missing.size(); ++k) {
        l2_normalize(fresh[k]);
        out[missing[k]] = fresh[k];
        if (config_.mode == ReplayMode::kRecord && store_) {
          store_->put_embedding(fingerprint_embed(texts[missing[k]], model), fresh[k]);
        }
      }
    }
    for (size_t i = 0; i < texts.size(); ++i) {
      if (alias_of[i] != SIZE_MAX) out[i] = out[alias_of[i]];
    }
    for (auto& v : out) l2_normalize(v);
    stats_.completed++;
    return out;
  } catch (...) {
    stats_.failed++;
    throw;
  }
}

}  // namespace biomine
