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

#include <random>

#include "biomine/fewshot.hpp"
#include "biomine/parse.hpp"
#include "biomine/simd.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace biomine;

namespace {

VectorIndex axis_index() {
  VectorIndex index;
  index.dimension = 3;
  auto add = [&](const std::string& id, std::vector<float> v) {
    IndexedExample ex;
    ex.doc_id = id;
    ex.vector = std::move(v);
    ex.input_text = "text " + id;
    ex.rendered_target = "target " + id;
    index.examples.push_back(std::move(ex));
  };
  add("e1", {1, 0, 0});
  add("e2", {0, 1, 0});
  add("e3", {0, 0, 1});
  return index;
}

// Components quantized to multiples of 1/64 make float dot products exact,
// so scalar, vector, and double paths must agree bit for bit.
std::vector<float> quantized_vector(std::mt19937_64& rng, size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) {
    x = static_cast<float>(static_cast<int>(rng() % 129) - 64) / 64.0f;
  }
  return v;
}

Gateway hash_embed_gateway() {
  return Gateway(test::scripted_backend([](const ChatRequest&) { return std::string("nope"); }),
                 nullptr, {2, ReplayMode::kReplay});
}

}  // namespace

TEST_SUITE("fewshot") {
  TEST_CASE("simd kernels agree with the scalar reference") {
    std::mt19937_64 rng(55);
    INFO("active kernel: ", simd::active_kernel());
    for (int iter = 0; iter < 200; ++iter) {
      const size_t dim = 1 + rng() % 300;
      auto a = quantized_vector(rng, dim);
      auto b = quantized_vector(rng, dim);
      float dispatched = simd::dot(a.data(), b.data(), dim);
      float scalar = simd::scalar::dot(a.data(), b.data(), dim);
      CHECK(dispatched == scalar);  // exact: quantized inputs
    }
    // non-quantized inputs: near agreement (fma reassociation)
    std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
    for (int iter = 0; iter < 100; ++iter) {
      const size_t dim = 1 + rng() % 1536;
      std::vector<float> a(dim), b(dim);
      for (auto& x : a) x = uni(rng);
      for (auto& x : b) x = uni(rng);
      double reference = 0.0;
      for (size_t i = 0; i < dim; ++i) {
        reference += static_cast<double>(a[i]) * static_cast<double>(b[i]);
      }
      CHECK(simd::dot(a.data(), b.data(), dim) ==
            doctest::Approx(reference).epsilon(1e-4));
    }
  }

  TEST_CASE("self-similarity ranks first with similarity 1") {
    auto index = axis_index();
    auto got = nearest(index, {0, 1, 0}, 2);
    REQUIRE(got.size() == 2);
    CHECK(got[0].doc_id == "e2");
  }

  TEST_CASE("hand-computed ordering for a skewed query") {
    auto index = axis_index();
    std::vector<float> q{0.9f, 0.1f, 0.0f};
    l2_normalize(q);
    // dot products: e1 = 0.9939, e2 = 0.1104, e3 = 0
    auto got = nearest(index, q, 2);
    REQUIRE(got.size() == 2);
    CHECK(got[0].doc_id == "e1");
    CHECK(got[1].doc_id == "e2");
  }

  TEST_CASE("k larger than the index clamps; k=0 and empty index yield nothing") {
    auto index = axis_index();
    CHECK(nearest(index, {1, 0, 0}, 10).size() == 3);
    CHECK(nearest(index, {1, 0, 0}, 0).empty());
    VectorIndex empty;
    CHECK(nearest(empty, {1, 0, 0}, 3).empty());
  }

  TEST_CASE("dimension mismatch is an error") {
    auto index = axis_index();
    CHECK_THROWS_AS(nearest(index, {1, 0}, 1), Error);
  }

  TEST_CASE("ties break by ascending doc_id") {
    VectorIndex index;
    index.dimension = 2;
    for (const auto* id : {"b", "a", "c"}) {
      IndexedExample ex;
      ex.doc_id = id;
      ex.vector = {1.0f, 0.0f};
      index.examples.push_back(std::move(ex));
    }
    auto got = nearest(index, {1, 0}, 3);
    CHECK(got[0].doc_id == "a");
    CHECK(got[1].doc_id == "b");
    CHECK(got[2].doc_id == "c");
  }

  TEST_CASE("excluded doc ids never come back") {
    auto index = axis_index();
    auto got = nearest(index, {1, 0, 0}, 3, {"e1"});
    CHECK(got.size() == 2);
    for (const auto& ex : got) CHECK(ex.doc_id != "e1");
  }

  TEST_CASE("exhaustive-scan oracle equivalence on random indices") {
    std::mt19937_64 rng(2024);
    for (int iter = 0; iter < 40; ++iter) {
      const size_t n = 1 + rng() % 200;
      const size_t dim = 4 + rng() % 24;
      VectorIndex index;
      index.dimension = dim;
      std::vector<std::pair<std::string, std::vector<float>>> entries;
      for (size_t i = 0; i < n; ++i) {
        IndexedExample ex;
        ex.doc_id = "d" + std::to_string(1000 + i);
        ex.vector = quantized_vector(rng, dim);
        entries.push_back({ex.doc_id, ex.vector});
        index.examples.push_back(std::move(ex));
      }
      auto query = quantized_vector(rng, dim);
      const size_t k = 1 + rng() % 12;
      auto got = nearest(index, query, k);
      auto want = test::oracle_top_k(entries, query, k);
      REQUIRE(got.size() == want.size());
      for (size_t i = 0; i < got.size(); ++i) CHECK(got[i].doc_id == want[i]);
    }
  }

  TEST_CASE("build_index renders re-parseable targets") {
    DatasetSplit split;
    {
      AnnotatedDoc ad;
      ad.doc.doc_id = "n1";
      ad.doc.title = "aspirin cures headache";
      Mention m;
      m.entity_type = "Chemical";
      m.start = 0;
      m.end = 7;
      m.surface = "aspirin";
      ad.mentions.push_back(m);
      split.docs.push_back(ad);
    }
    {
      AnnotatedDoc ad;
      ad.doc.doc_id = "n2";
      ad.doc.title = "plain text";
      split.docs.push_back(ad);
    }
    {
      AnnotatedDoc ad;
      ad.doc.doc_id = "n3";
      ad.doc.title = "third";
      split.docs.push_back(ad);
    }

    auto gateway = hash_embed_gateway();
    IndexBuildConfig config;
    config.task = Task::kNer;
    config.embed_model = "embed-model";
    auto index = build_index(split, config, gateway);
    REQUIRE(index.size() == 3);
    CHECK(index.dimension == 16);

    // rendered NER target contains the tag scheme and parses back to gold
    CHECK(index.examples[0].rendered_target.find("<Type = \"Chemical\">") != std::string::npos);
    auto parsed = parse_ner(split.docs[0].doc, index.examples[0].rendered_target, {"Chemical"});
    REQUIRE(parsed.mentions.size() == 1);
    CHECK(parsed.mentions[0] == split.docs[0].mentions[0]);

    // unit-length vectors
    for (const auto& ex : index.examples) {
      double norm = 0;
      for (float x : ex.vector) norm += static_cast<double>(x) * x;
      CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
    }
  }

  TEST_CASE("empty split builds an empty index") {
    auto gateway = hash_embed_gateway();
    IndexBuildConfig config;
    config.task = Task::kNer;
    config.embed_model = "m";
    CHECK(build_index(DatasetSplit{}, config, gateway).size() == 0);
  }

  TEST_CASE("embedding cache avoids re-embedding across builds") {
    test::TempDir tmp("cache");
    DatasetSplit split;
    AnnotatedDoc ad;
    ad.doc.doc_id = "c1";
    ad.doc.title = "cache me";
    split.docs.push_back(ad);

    std::atomic<int> embeds{0};
    auto backend = std::make_shared<CallbackBackend>(
        "s", [](const ChatRequest&) { return std::string(); },
        [&](const std::string& text, const std::string&) {
          embeds++;
          return test::hash_embedding(text);
        });
    IndexBuildConfig config;
    config.task = Task::kNer;
    config.embed_model = "m";
    {
      Gateway gw(backend, nullptr, {1, ReplayMode::kReplay});
      EmbeddingCache cache(tmp.file("cache.jsonl"));
      build_index(split, config, gw, &cache);
      CHECK(embeds.load() == 1);
    }
    {
      Gateway gw(backend, nullptr, {1, ReplayMode::kReplay});
      EmbeddingCache cache(tmp.file("cache.jsonl"));
      build_index(split, config, gw, &cache);
      CHECK(embeds.load() == 1);  // served from disk
    }
  }
}
