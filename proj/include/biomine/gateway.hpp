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

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "biomine/common.hpp"

namespace biomine {

struct ChatMessage {
  std::string role;  // system, user, assistant
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model;
  double temperature = 0.0;
  // Serialized JSON schema for constrained output; key order is meaningful
  // and preserved, hence a string rather than a parsed object.
  std::optional<std::string> response_schema;
  std::optional<int> max_tokens;
};

struct ChatResponse {
  std::string content;
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
  std::string backend_id;
};

// Stable across runs and platforms. Covers messages, model, and schema;
// max_tokens and sampling knobs deliberately do not fragment the cache.
std::string fingerprint(const ChatRequest& request);
std::string fingerprint_embed(const std::string& text, const std::string& model);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                                const std::string& model) = 0;
  virtual std::string id() const = 0;
};

// Function-backed backend; the unit and acceptance suites script model
// behavior through this.
class CallbackBackend : public Backend {
 public:
  using ChatFn = std::function<std::string(const ChatRequest&)>;
  using EmbedFn = std::function<std::vector<float>(const std::string&, const std::string&)>;

  CallbackBackend(std::string id, ChatFn chat, EmbedFn embed)
      : id_(std::move(id)), chat_(std::move(chat)), embed_(std::move(embed)) {}

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                        const std::string& model) override;
  std::string id() const override { return id_; }

 private:
  std::string id_;
  ChatFn chat_;
  EmbedFn embed_;
};

// Fails on any call; paired with strict replay to prove a run needs no
// network.
std::shared_ptr<Backend> make_fail_backend();

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. https://api.openai.com
  std::string chat_path = "/v1/chat/completions";
  std::string embed_path = "/v1/embeddings";
  std::string auth_env = "OPENAI_API_KEY";
  RetryPolicy retry;
  std::chrono::seconds read_timeout{120};
};

std::shared_ptr<Backend> make_http_backend(const HttpBackendConfig& config);

// Persisted request->response cache: a JSON-lines file of fingerprinted
// records, loaded fully at open, appended on write.
class ReplayStore {
 public:
  explicit ReplayStore(std::string path);

  std::optional<ChatResponse> get_chat(const std::string& fp) const;
  std::optional<std::vector<float>> get_embedding(const std::string& fp) const;
  void put_chat(const std::string& fp, const ChatResponse& response);
  void put_embedding(const std::string& fp, const std::vector<float>& vector);
  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::map<std::string, ChatResponse> chat_;
  std::map<std::string, std::vector<float>> embeddings_;
};

enum class ReplayMode { kRecord, kReplay, kStrictReplay };

std::optional<ReplayMode> replay_mode_from_string(const std::string& s);

struct GatewayStats {
  std::atomic<int64_t> issued{0};
  std::atomic<int64_t> completed{0};
  std::atomic<int64_t> failed{0};
  std::atomic<int64_t> chat_calls{0};
  std::atomic<int64_t> replay_hits{0};
  std::atomic<int64_t> live_calls{0};
  std::atomic<int64_t> prompt_tokens{0};
  std::atomic<int64_t> completion_tokens{0};
  std::atomic<int64_t> max_in_flight{0};
};

struct GatewayConfig {
  int max_concurrency = 4;
  ReplayMode mode = ReplayMode::kRecord;
};

// Front door for all model traffic: replay cache consultation, bounded
// parallelism over the live backend, and usage accounting.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<ReplayStore> store,
          GatewayConfig config);

  ChatResponse complete(const ChatRequest& request);

  // One unit-length vector per input text, cached per (text, model).
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                        const std::string& model);

  const GatewayStats& stats() const { return stats_; }
  ReplayMode mode() const { return config_.mode; }

 private:
  class Slot;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<ReplayStore> store_;
  GatewayConfig config_;
  GatewayStats stats_;
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
};

void l2_normalize(std::vector<float>& v);

}  // namespace biomine
