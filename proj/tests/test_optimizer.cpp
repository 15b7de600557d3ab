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

#include "biomine/annotate.hpp"
#include "biomine/metrics.hpp"
#include "biomine/optimizer.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace biomine;

namespace {

const std::vector<std::string> kVocab{"Red", "Blue"};

TaskConfig toy_config() {
  TaskConfig c;
  c.dataset_id = "toy";
  c.task = Task::kLabels;
  c.label_vocabulary = kVocab;
  return c;
}

PromptTemplate toy_seed() {
  PromptTemplate t;
  t.template_id = "seed";
  t.task = Task::kLabels;
  t.output_contract = OutputContract::kJsonLabels;
  t.system_text = "Label the document with {label_keys}. v0";
  t.user_text = "Document:\n{document}\nAnswer as JSON.";
  return t;
}

// Gold: a doc is Red iff its text contains "red", Blue iff "blue".
DatasetSplit toy_pool(size_t n) {
  DatasetSplit pool;
  for (size_t i = 0; i < n; ++i) {
    AnnotatedDoc ad;
    ad.doc.doc_id = "p" + std::to_string(1000 + i);
    std::string color = (i % 3 == 0) ? "red" : (i % 3 == 1) ? "blue" : "red blue";
    ad.doc.title = "item " + std::to_string(i) + " " + color + " sample";
    if (color.find("red") != std::string::npos) ad.labels.insert("Red");
    if (color.find("blue") != std::string::npos) ad.labels.insert("Blue");
    pool.docs.push_back(ad);
  }
  return pool;
}

// Scripted model whose annotation quality depends on the prompt version:
// v0 ignores "blue", v1+ answers perfectly. Critiques and rewrites are
// deterministic text transforms.
std::shared_ptr<Backend> toy_backend() {
  return test::scripted_backend([](const ChatRequest& req) -> std::string {
    const std::string& system = req.messages[0].content;
    const std::string& user = req.messages.back().content;
    if (user.find("critiques of the instruction text") != std::string::npos ||
        user.find("Write 3 distinct") != std::string::npos) {
      return "1. Too vague about color words.\n2. Ignores blue entirely.\n3. Add output rules.";
    }
    if (user.find("Rewrite the instruction text") != std::string::npos) {
      // bump the version suffix; keep placeholders
      size_t at = user.find("v0");
      if (at != std::string::npos) {
        return "Label the document with {label_keys}. v1";
      }
      return "Label the document with {label_keys}. v2";
    }
    // scoring call
    std::string red = user.find("red") != std::string::npos ? "true" : "false";
    std::string blue = user.find("blue") != std::string::npos ? "true" : "false";
    if (system.find("v0") != std::string::npos) blue = "false";  // weak seed prompt
    return "{\"Red\": " + red + ", \"Blue\": " + blue + "}";
  });
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("score_prompt: perfect, degenerate, and hand-computed batches") {
    auto pool = toy_pool(4);
    std::vector<const AnnotatedDoc*> batch;
    for (const auto& d : pool.docs) batch.push_back(&d);
    TaskConfig config = toy_config();
    PlanOptions options;
    options.model = "m";

    // scripted perfect predictions
    Gateway perfect(test::scripted_backend([](const ChatRequest& req) -> std::string {
                      const std::string& user = req.messages.back().content;
                      std::string red =
                          user.find("red") != std::string::npos ? "true" : "false";
                      std::string blue =
                          user.find("blue") != std::string::npos ? "true" : "false";
                      return "{\"Red\": " + red + ", \"Blue\": " + blue + "}";
                    }),
                    nullptr, {1, ReplayMode::kReplay});
    CandidatePrompt seed;
    seed.tmpl = toy_seed();
    CHECK(score_prompt(seed, batch, perfect, config, options) == 1.0);

    // all-empty predictions against all-positive gold
    Gateway empty(test::scripted_backend(
                      [](const ChatRequest&) { return std::string("{}"); }),
                  nullptr, {1, ReplayMode::kReplay});
    CHECK(score_prompt(seed, batch, empty, config, options) == 0.0);

    // hand-computed: red answered correctly, blue never predicted.
    // docs: p1000 red, p1001 blue, p1002 red+blue, p1003 red.
    // Red: tp=3 fp=0 fn=0 -> F1 1.0; Blue: tp=0 fn=2 -> F1 0. Macro = 0.5.
    Gateway red_only(test::scripted_backend([](const ChatRequest& req) -> std::string {
                       const std::string& user = req.messages.back().content;
                       std::string red =
                           user.find("red") != std::string::npos ? "true" : "false";
                       return "{\"Red\": " + red + ", \"Blue\": false}";
                     }),
                     nullptr, {1, ReplayMode::kReplay});
    std::vector<BatchResult> results;
    double score = score_prompt(seed, batch, red_only, config, options, &results);
    CHECK(score == doctest::Approx(0.5).epsilon(1e-12));
    REQUIRE(results.size() == 4);

    // cross-check with the rational oracle
    DatasetSplit pred, gold;
    for (const auto& r : results) {
      gold.docs.push_back(*r.gold);
      pred.docs.push_back(to_annotated_doc(r.gold->doc, r.predicted));
    }
    auto by_label = test::oracle_label_counts(pred, gold, kVocab);
    CHECK(score == test::oracle_macro_f1(by_label));
  }

  TEST_CASE("gateway failures during scoring count as empty predictions") {
    auto pool = toy_pool(2);
    std::vector<const AnnotatedDoc*> batch;
    for (const auto& d : pool.docs) batch.push_back(&d);
    Gateway flaky(test::scripted_backend([](const ChatRequest& req) -> std::string {
                    if (req.messages.back().content.find("item 0") != std::string::npos) {
                      throw Error("boom");
                    }
                    return "{\"Red\": false, \"Blue\": true}";
                  }),
                  nullptr, {1, ReplayMode::kReplay});
    CandidatePrompt seed;
    seed.tmpl = toy_seed();
    PlanOptions options;
    options.model = "m";
    std::vector<BatchResult> results;
    CHECK_NOTHROW(score_prompt(seed, batch, flaky, toy_config(), options, &results));
    CHECK(!results[0].predicted.warnings.empty());
  }

  TEST_CASE("build_gradient embeds the distribution gap and asks for n critiques") {
    auto pool = toy_pool(4);
    std::vector<BatchResult> results;
    for (const auto& d : pool.docs) {
      BatchResult r;
      r.gold = &d;
      // predictions systematically over-produce Red
      r.predicted.labels.insert("Red");
      results.push_back(std::move(r));
    }
    CandidatePrompt seed;
    seed.tmpl = toy_seed();
    OptimizerConfig oc;
    oc.gradients_per_iteration = 3;
    PlanOptions options;
    options.model = "m";

    std::string seen_request;
    Gateway gw(test::scripted_backend([&](const ChatRequest& req) {
                 seen_request = req.messages.back().content;
                 return std::string("1. first critique\n2. second critique\n3. third critique");
               }),
               nullptr, {1, ReplayMode::kReplay});
    auto gradients = build_gradient(seed, results, gw, toy_config(), options, oc);
    REQUIRE(gradients.size() == 3);
    for (const auto& g : gradients) CHECK(!g.empty());
    // the critique request quotes predicted vs gold frequencies
    CHECK(seen_request.find("Red: predicted 4, gold 3") != std::string::npos);
    CHECK(seen_request.find("Blue: predicted 0, gold 2") != std::string::npos);
    CHECK(seen_request.find("Mean items per document") != std::string::npos);
  }

  TEST_CASE("apply_gradient validates the placeholder set") {
    CandidatePrompt seed;
    seed.tmpl = toy_seed();
    PlanOptions options;
    options.model = "m";

    Gateway keeps(test::scripted_backend([](const ChatRequest&) {
                    return std::string("Better instructions with {label_keys}.");
                  }),
                  nullptr, {1, ReplayMode::kReplay});
    auto ok = apply_gradient(seed, "too vague", keeps, toy_config(), options, 1, 0);
    REQUIRE(ok.has_value());
    CHECK(ok->lineage.size() == 1);
    CHECK(ok->tmpl.template_id == "seed-i1g0");
    CHECK(!ok->score.has_value());

    Gateway drops(test::scripted_backend([](const ChatRequest&) {
                    return std::string("Rewrite that lost every placeholder.");
                  }),
                  nullptr, {1, ReplayMode::kReplay});
    std::vector<std::string> warnings;
    auto rejected = apply_gradient(seed, "too vague", drops, toy_config(), options, 1, 1,
                                   &warnings);
    CHECK(!rejected.has_value());
    CHECK(!warnings.empty());
  }

  TEST_CASE("optimize: accounting, improvement, and seeded determinism") {
    auto pool = toy_pool(12);
    OptimizerConfig oc;
    oc.batch_size = 6;
    oc.gradients_per_iteration = 2;
    oc.beam_width = 2;
    oc.iterations = 3;
    oc.seed = 99;
    TaskConfig config = toy_config();
    PlanOptions options;
    options.model = "m";

    Gateway gw(toy_backend(), nullptr, {1, ReplayMode::kReplay});
    auto result = optimize(toy_seed(), pool, oc, gw, config, options);

    CHECK(result.scored_candidates <=
          1 + static_cast<int64_t>(oc.iterations) * oc.beam_width * oc.gradients_per_iteration);
    REQUIRE(!result.beam.empty());
    CHECK(result.beam.size() <= static_cast<size_t>(oc.beam_width));
    // v1/v2 prompts answer perfectly; the weak seed cannot win
    CHECK(result.beam.front().score.value_or(0) == 1.0);
    CHECK(result.beam.front().tmpl.template_id != "seed");
    // lineage chains back to the seed
    CHECK(!result.beam.front().lineage.empty());

    // best-so-far score over the log never decreases across iterations
    double best = -1.0;
    int last_iteration = 0;
    std::map<int, double> best_by_iteration;
    for (const auto& entry : result.log) {
      best = std::max(best, entry.score);
      best_by_iteration[entry.iteration] = best;
      last_iteration = std::max(last_iteration, entry.iteration);
    }
    double prev = -1.0;
    for (const auto& [iter, score] : best_by_iteration) {
      CHECK(score >= prev);
      prev = score;
    }

    // identical rerun
    Gateway gw2(toy_backend(), nullptr, {1, ReplayMode::kReplay});
    auto again = optimize(toy_seed(), pool, oc, gw2, config, options);
    REQUIRE(again.beam.size() == result.beam.size());
    for (size_t i = 0; i < again.beam.size(); ++i) {
      CHECK(again.beam[i].tmpl.template_id == result.beam[i].tmpl.template_id);
      CHECK(again.beam[i].score == result.beam[i].score);
    }
    REQUIRE(again.log.size() == result.log.size());
    for (size_t i = 0; i < again.log.size(); ++i) {
      CHECK(optimize_log_to_json(again.log[i]) == optimize_log_to_json(result.log[i]));
    }
  }

  TEST_CASE("optimize with zero iterations returns the scored seed only") {
    auto pool = toy_pool(6);
    OptimizerConfig oc;
    oc.batch_size = 4;
    oc.iterations = 0;
    Gateway gw(toy_backend(), nullptr, {1, ReplayMode::kReplay});
    PlanOptions options;
    options.model = "m";
    auto result = optimize(toy_seed(), pool, oc, gw, toy_config(), options);
    REQUIRE(result.beam.size() == 1);
    CHECK(result.beam[0].tmpl.template_id == "seed");
    CHECK(result.beam[0].score.has_value());
    CHECK(result.scored_candidates == 1);
  }

  TEST_CASE("optimize rejects a pool smaller than the batch") {
    auto pool = toy_pool(3);
    OptimizerConfig oc;
    oc.batch_size = 100;
    Gateway gw(toy_backend(), nullptr, {1, ReplayMode::kReplay});
    PlanOptions options;
    options.model = "m";
    CHECK_THROWS_WITH_AS(optimize(toy_seed(), pool, oc, gw, toy_config(), options),
                         doctest::Contains("batch_size"), Error);
  }
}
