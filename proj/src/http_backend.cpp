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

#ifdef BIOMINE_HTTPS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <httplib.h>

#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include "biomine/gateway.hpp"

namespace biomine {

namespace {

using nlohmann::json;

bool retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status < 600);
}

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw Error("http backend: base_url is empty");
  }

  ChatResponse complete(const ChatRequest& request) override {
    json body;
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    auto& messages = body["messages"] = json::array();
    for (const auto& m : request.messages) {
      messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
    if (request.response_schema) {
      json schema = json::parse(*request.response_schema);
      body["response_format"] = {
          {"type", "json_schema"},
          {"json_schema", {{"name", "output"}, {"strict", true}, {"schema", schema}}}};
    }

    const std::string payload = post_with_retries(config_.chat_path, body.dump());
    json parsed = json::parse(payload, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty()) {
      throw Error("http backend: malformed chat response: " + payload.substr(0, 200));
    }
    ChatResponse out;
    out.content = parsed["choices"][0]["message"]["content"].get<std::string>();
    if (parsed.contains("usage")) {
      out.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
      out.completion_tokens = parsed["usage"].value("completion_tokens", 0);
    }
    out.backend_id = id();
    return out;
  }

  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                        const std::string& model) override {
    json body;
    body["model"] = model;
    body["input"] = texts;
    const std::string payload = post_with_retries(config_.embed_path, body.dump());
    json parsed = json::parse(payload, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("data")) {
      throw Error("http backend: malformed embedding response: " + payload.substr(0, 200));
    }
    std::vector<std::vector<float>> out;
    out.reserve(parsed["data"].size());
    for (const auto& item : parsed["data"]) {
      out.push_back(item.at("embedding").get<std::vector<float>>());
    }
    return out;
  }

  std::string id() const override { return config_.base_url; }

 private:
  std::string post_with_retries(const std::string& path, const std::string& body) {
    httplib::Client client(config_.base_url);
    client.set_read_timeout(config_.read_timeout);
    client.set_connection_timeout(std::chrono::seconds(10));
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.auth_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto delay = config_.retry.initial_delay;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(delay);
        delay = std::min(
            std::chrono::milliseconds(static_cast<int64_t>(
                static_cast<double>(delay.count()) * config_.retry.multiplier)),
            config_.retry.max_delay);
      }
      auto res = client.Post(path, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 200 && res->status < 300) {
        return res->body;
      }
      if (!retryable_status(res->status)) {
        throw Error("http backend: status " + std::to_string(res->status) + " on " + path +
                    ": " + res->body.substr(0, 200));
      }
      last_error = "status " + std::to_string(res->status);
    }
    throw Error("http backend: retry budget exhausted after " +
                std::to_string(config_.retry.max_retries + 1) + " attempts on " + path +
                " (last: " + last_error + ")");
  }

  HttpBackendConfig config_;
};

}  // namespace

std::shared_ptr<Backend> make_http_backend(const HttpBackendConfig& config) {
  return std::make_shared<HttpBackend>(config);
}

}  // namespace biomine
