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

#include <doctest.h>

#include <atomic>
#include <thread>

#ifdef BIOMINE_HTTPS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "biomine/gateway.hpp"
#include "support/helpers.hpp"

using namespace biomine;

namespace {

ChatRequest simple_request(const std::string& text) {
  ChatRequest r;
  r.model = "test-model";
  r.messages.push_back({"system", "be brief"});
  r.messages.push_back({"user", text});
  return r;
}

}  // namespace

TEST_SUITE("gateway") {
  TEST_CASE("fingerprints are stable and sensitive to what matters") {
    ChatRequest a = simple_request("hello");
    // pinned value: regressions here would invalidate every replay store
    CHECK(fingerprint(a) == fingerprint(simple_request("hello")));
    CHECK(fingerprint(a) == "39630541ed2d9323");

    ChatRequest b = simple_request("hello!");
    CHECK(fingerprint(a) != fingerprint(b));

    ChatRequest model_change = a;
    model_change.model = "other";
    CHECK(fingerprint(a) != fingerprint(model_change));

    ChatRequest schema_change = a;
    schema_change.response_schema = "{\"type\":\"object\"}";
    CHECK(fingerprint(a) != fingerprint(schema_change));

    // max_tokens must not fragment the cache
    ChatRequest tokens_change = a;
    tokens_change.max_tokens = 512;
    CHECK(fingerprint(a) == fingerprint(tokens_change));

    // message boundaries matter: ["ab","c"] != ["a","bc"]
    ChatRequest m1, m2;
    m1.model = m2.model = "m";
    m1.messages = {{"user", "ab"}, {"user", "c"}};
    m2.messages = {{"user", "a"}, {"user", "bc"}};
    CHECK(fingerprint(m1) != fingerprint(m2));
  }

  TEST_CASE("replay store round-trips chat and embedding records") {
    test::TempDir tmp("replay");
    const std::string path = tmp.file("store.jsonl");
    {
      ReplayStore store(path);
      ChatResponse r;
      r.content = "hi there";
      r.prompt_tokens = 12;
      r.completion_tokens = 3;
      r.backend_id = "scripted";
      store.put_chat("fp1", r);
      store.put_embedding("fp2", {0.6f, 0.8f});
      CHECK(store.size() == 2);
    }
    ReplayStore reloaded(path);
    CHECK(reloaded.size() == 2);
    auto chat = reloaded.get_chat("fp1");
    REQUIRE(chat);
    CHECK(chat->content == "hi there");
    CHECK(chat->prompt_tokens == 12);
    auto vec = reloaded.get_embedding("fp2");
    REQUIRE(vec);
    CHECK((*vec)[1] == doctest::Approx(0.8f));
    CHECK(!reloaded.get_chat("missing"));
  }

  TEST_CASE("replay hit returns the stored response byte-identically") {
    test::TempDir tmp("replay_hit");
    auto store = std::make_shared<ReplayStore>(tmp.file("store.jsonl"));
    ChatRequest req = simple_request("cached?");
    ChatResponse canned;
    canned.content = "yes \xF0\x9F\x8C\x8D exactly";
    canned.backend_id = "recorded";
    store->put_chat(fingerprint(req), canned);

    Gateway gw(make_fail_backend(), store, {4, ReplayMode::kStrictReplay});
    auto got = gw.complete(req);
    CHECK(got.content == canned.content);
    CHECK(got.backend_id == "recorded");
    CHECK(gw.stats().replay_hits.load() == 1);
    CHECK(gw.stats().live_calls.load() == 0);
  }

  TEST_CASE("strict-replay miss is an error carrying the fingerprint") {
    test::TempDir tmp("strict");
    auto store = std::make_shared<ReplayStore>(tmp.file("store.jsonl"));
    Gateway gw(make_fail_backend(), store, {4, ReplayMode::kStrictReplay});
    ChatRequest req = simple_request("never recorded");
    const std::string fp = fingerprint(req);
    CHECK_THROWS_WITH_AS(gw.complete(req), doctest::Contains(fp.c_str()), Error);
  }

  TEST_CASE("record mode persists and the next run replays without a backend") {
    test::TempDir tmp("record");
    const std::string path = tmp.file("store.jsonl");
    std::atomic<int> live_calls{0};
    auto backend = test::scripted_backend([&](const ChatRequest& r) {
      live_calls++;
      return "echo: " + r.messages.back().content;
    });
    {
      Gateway gw(backend, std::make_shared<ReplayStore>(path), {4, ReplayMode::kRecord});
      CHECK(gw.complete(simple_request("a")).content == "echo: a");
      CHECK(gw.complete(simple_request("a")).content == "echo: a");  // replay hit
      CHECK(live_calls.load() == 1);
    }
    Gateway gw2(make_fail_backend(), std::make_shared<ReplayStore>(path),
                {4, ReplayMode::kStrictReplay});
    CHECK(gw2.complete(simple_request("a")).content == "echo: a");
  }

  TEST_CASE("429 twice then 200 succeeds after two backoffs") {
    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      int n = ++hits;
      if (n <= 2) {
        res.status = 429;
        res.set_content("slow down", "text/plain");
        return;
      }
      res.set_content(
          R"({"choices":[{"message":{"content":"ok after retries"}}],)"
          R"("usage":{"prompt_tokens":5,"completion_tokens":2}})",
          "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port);
    config.retry.max_retries = 4;
    config.retry.initial_delay = std::chrono::milliseconds(5);
    config.retry.max_delay = std::chrono::milliseconds(20);
    auto backend = make_http_backend(config);

    auto resp = backend->complete(simple_request("retry me"));
    CHECK(resp.content == "ok after retries");
    CHECK(resp.prompt_tokens == 5);
    CHECK(hits.load() == 3);

    server.stop();
    server_thread.join();
  }

  TEST_CASE("non-retryable status fails immediately; budget exhaustion fails eventually") {
    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      hits++;
      if (req.body.find("bad") != std::string::npos) {
        res.status = 400;
        res.set_content("no", "text/plain");
      } else {
        res.status = 503;
        res.set_content("flaky", "text/plain");
      }
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port);
    config.retry.max_retries = 2;
    config.retry.initial_delay = std::chrono::milliseconds(2);
    auto backend = make_http_backend(config);

    hits = 0;
    CHECK_THROWS_WITH_AS(backend->complete(simple_request("bad request")),
                         doctest::Contains("400"), Error);
    CHECK(hits.load() == 1);

    hits = 0;
    CHECK_THROWS_WITH_AS(backend->complete(simple_request("flaky")),
                         doctest::Contains("exhausted"), Error);
    CHECK(hits.load() == 3);  // initial + 2 retries

    server.stop();
    server_thread.join();
  }

  TEST_CASE("embeddings are normalized and cached per text") {
    test::TempDir tmp("embed");
    std::atomic<int> embed_calls{0};
    auto backend = std::make_shared<CallbackBackend>(
        "scripted", [](const ChatRequest&) { return std::string("unused"); },
        [&](const std::string& text, const std::string&) {
          embed_calls++;
          // deliberately unnormalized
          std::vector<float> v(8, 0.0f);
          v[text.size() % 8] = 42.0f;
          v[(text.size() + 1) % 8] = 7.0f;
          return v;
        });
    Gateway gw(backend, std::make_shared<ReplayStore>(tmp.file("store.jsonl")),
               {4, ReplayMode::kRecord});

    auto vectors = gw.embed({"x", "x", "longer text"}, "embed-model");
    REQUIRE(vectors.size() == 3);
    CHECK(vectors[0] == vectors[1]);
    for (const auto& v : vectors) {
      double norm = 0;
      for (float x : v) norm += static_cast<double>(x) * x;
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
    }
    // "x" deduplicated within the batch, so two live embeddings total
    CHECK(embed_calls.load() == 2);

    embed_calls = 0;
    auto again = gw.embed({"x", "longer text"}, "embed-model");
    CHECK(embed_calls.load() == 0);  // replay hits
    CHECK(again[0] == vectors[0]);

    CHECK_THROWS_AS(gw.embed({}, "embed-model"), Error);
  }

  TEST_CASE("concurrency limiter bounds in-flight requests and accounting balances") {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    auto backend = test::scripted_backend([&](const ChatRequest& r) {
      int now = ++in_flight;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(3));
      --in_flight;
      if (r.messages.back().content == "fail me") throw Error("scripted failure");
      return std::string("done");
    });
    Gateway gw(backend, nullptr, {3, ReplayMode::kReplay});

    std::vector<std::thread> workers;
    std::atomic<int> ok{0}, bad{0};
    for (int t = 0; t < 10; ++t) {
      workers.emplace_back([&, t] {
        for (int i = 0; i < 5; ++i) {
          try {
            gw.complete(simple_request((t == 0 && i == 0) ? "fail me" : "work"));
            ok++;
          } catch (const Error&) {
            bad++;
          }
        }
      });
    }
    for (auto& w : workers) w.join();

    CHECK(peak.load() <= 3);
    CHECK(gw.stats().issued.load() == 50);
    CHECK(gw.stats().completed.load() == ok.load());
    CHECK(gw.stats().failed.load() == bad.load());
    CHECK(gw.stats().completed.load() + gw.stats().failed.load() == gw.stats().issued.load());
    CHECK(gw.stats().max_in_flight.load() <= 3);
  }

  TEST_CASE("request validation") {
    Gateway gw(test::scripted_backend([](const ChatRequest&) { return std::string("x"); }),
               nullptr, {1, ReplayMode::kReplay});
    ChatRequest empty;
    empty.model = "m";
    CHECK_THROWS_AS(gw.complete(empty), Error);
    ChatRequest negative = simple_request("t");
    negative.temperature = -1.0;
    CHECK_THROWS_AS(gw.complete(negative), Error);
  }
}
