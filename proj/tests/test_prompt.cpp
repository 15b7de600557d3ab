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

#include <nlohmann/json.hpp>

#include "biomine/prompt.hpp"
#include "support/helpers.hpp"

using namespace biomine;

namespace {

AnnotatedDoc litcovid_doc() {
  AnnotatedDoc ad;
  ad.doc.doc_id = "doc1";
  ad.doc.title = "Remdesivir for covid.";
  ad.doc.abstract_text = "A trial of antiviral treatment.";
  return ad;
}

TaskConfig litcovid_config() {
  return load_task_config(test::configs_dir() + "/litcovid.json");
}

PlanOptions options() {
  PlanOptions o;
  o.model = "test-model";
  o.embed_model = "embed-model";
  return o;
}

}  // namespace

TEST_SUITE("prompt") {
  TEST_CASE("template files parse with front-matter and sections") {
    auto t = load_template(test::templates_dir() + "/labels/basic.tmpl");
    CHECK(t.template_id == "labels-basic");
    CHECK(t.task == Task::kLabels);
    CHECK(t.output_contract == OutputContract::kJsonLabels);
    CHECK(!t.system_text.empty());
    CHECK(t.user_text.find("{document}") != std::string::npos);
    CHECK(!t.supports_two_step());

    auto two = load_template(test::templates_dir() + "/labels/two-step.tmpl");
    CHECK(two.supports_two_step());
    CHECK(two.structurize_text.find("{previous_answer}") != std::string::npos);
  }

  TEST_CASE("template render/parse round-trip") {
    auto t = load_template(test::templates_dir() + "/ner/two-step.tmpl");
    auto back = parse_template(render_template_file(t), "roundtrip");
    CHECK(back.template_id == t.template_id);
    CHECK(back.system_text == t.system_text);
    CHECK(back.user_text == t.user_text);
    CHECK(back.reasoning_text == t.reasoning_text);
    CHECK(back.structurize_text == t.structurize_text);
  }

  TEST_CASE("malformed templates are rejected") {
    CHECK_THROWS_AS(parse_template("task: ner\n---\n== system ==\nx\n", "t"), Error);  // no id
    CHECK_THROWS_AS(parse_template("template_id: a\ntask: bogus\noutput_contract: tuples\n---\n"
                                   "== system ==\nx\n== user ==\ny\n", "t"),
                    Error);
    CHECK_THROWS_AS(
        parse_template("template_id: a\ntask: ner\noutput_contract: tagged-text\n---\n"
                       "== user ==\nonly user\n", "t"),
        Error);  // missing system
  }

  TEST_CASE("substitution fills known placeholders and leaves literal braces") {
    std::map<std::string, std::string> values{{"document", "TEXT"}};
    CHECK(substitute("doc: {document} json: {\"a\": 1}", values, "t") ==
          "doc: TEXT json: {\"a\": 1}");
    CHECK_THROWS_WITH_AS(substitute("{examples}", values, "t"),
                         doctest::Contains("unresolved placeholder"), Error);
  }

  TEST_CASE("basic plan expands the template over the document") {
    auto t = load_template(test::templates_dir() + "/labels/basic.tmpl");
    auto plan = plan_basic(litcovid_doc(), t, litcovid_config(), options());
    REQUIRE(plan.steps.size() == 1);
    REQUIRE(plan.steps[0].messages.size() == 2);
    // document embedded verbatim
    CHECK(plan.steps[0].messages[1].content.find("Remdesivir for covid. A trial of antiviral "
                                                 "treatment.") != std::string::npos);
    // schema lists exactly the 7 topic keys
    REQUIRE(plan.steps[0].response_schema.has_value());
    auto schema = nlohmann::ordered_json::parse(*plan.steps[0].response_schema);
    CHECK(schema["properties"].size() == 7);
    CHECK(schema["properties"].contains("Epidemic Forecasting"));
  }

  TEST_CASE("basic plan rejects templates with an examples placeholder") {
    auto t = load_template(test::templates_dir() + "/labels/fewshot.tmpl");
    CHECK_THROWS_WITH_AS(plan_basic(litcovid_doc(), t, litcovid_config(), options()),
                         doctest::Contains("{examples}"), Error);
  }

  TEST_CASE("ner plan embeds the text verbatim") {
    auto t = load_template(test::templates_dir() + "/ner/basic.tmpl");
    TaskConfig config = load_task_config(test::configs_dir() + "/bc5cdr-disease.json");
    AnnotatedDoc doc;
    doc.doc.doc_id = "n";
    doc.doc.title = "Weird <text> & stuff.";
    auto plan = plan_basic(doc, t, config, options());
    CHECK(plan.steps[0].messages[1].content.find("Weird <text> & stuff.") != std::string::npos);
    CHECK(!plan.steps[0].response_schema.has_value());
  }

  TEST_CASE("fewshot plan orders examples most-similar-last and excludes the query") {
    auto t = load_template(test::templates_dir() + "/labels/fewshot.tmpl");
    TaskConfig config = litcovid_config();

    // train split with one document identical to the query: it must be
    // excluded; the remaining two appear with the more similar one last
    DatasetSplit train;
    for (const auto& [id, text] : std::vector<std::pair<std::string, std::string>>{
             {"doc1", "Remdesivir for covid. A trial of antiviral treatment."},
             {"near", "Remdesivir for covid. A trial of antiviral treatment. Extra."},
             {"far", "Unrelated text about agriculture."}}) {
      AnnotatedDoc ad;
      ad.doc.doc_id = id;
      ad.doc.title = text;
      ad.labels.insert("Treatment");
      train.docs.push_back(ad);
    }
    // designed embeddings: the query and "doc1" coincide, "near" is close,
    // "far" is orthogonal
    auto backend = std::make_shared<CallbackBackend>(
        "designed", [](const ChatRequest&) { return std::string(); },
        [](const std::string& text, const std::string&) -> std::vector<float> {
          if (text.find("agriculture") != std::string::npos) return {0.0f, 1.0f};
          if (text.find("Extra") != std::string::npos) return {0.9f, 0.4359f};
          return {1.0f, 0.0f};
        });
    Gateway gw(backend, nullptr, {1, ReplayMode::kReplay});
    IndexBuildConfig ib;
    ib.task = Task::kLabels;
    ib.label_vocabulary = config.label_vocabulary;
    ib.embed_model = "embed-model";
    auto index = build_index(train, ib, gw);

    PlanOptions o = options();
    o.fewshot_k = 3;
    auto plan = plan_fewshot(litcovid_doc(), t, config, index, gw, o);
    REQUIRE(plan.steps.size() == 1);
    // clamped to 2 examples with a warning, query doc excluded
    CHECK(plan.fewshot_doc_ids.size() == 2);
    CHECK(!plan.warnings.empty());
    for (const auto& id : plan.fewshot_doc_ids) CHECK(id != "doc1");
    // most similar ("near") sits last, adjacent to the query
    CHECK(plan.fewshot_doc_ids.back() == "near");
    const std::string& user = plan.steps[0].messages[1].content;
    CHECK(user.find("Example 1") != std::string::npos);
    CHECK(user.find("\"Treatment\":true") != std::string::npos);

    // deterministic: identical inputs give identical fingerprints
    auto plan2 = plan_fewshot(litcovid_doc(), t, config, index, gw, o);
    ChatRequest r1, r2;
    r1.model = r2.model = "m";
    r1.messages = plan.steps[0].messages;
    r2.messages = plan2.steps[0].messages;
    CHECK(fingerprint(r1) == fingerprint(r2));
  }

  TEST_CASE("fewshot plan rejects an empty index") {
    auto t = load_template(test::templates_dir() + "/labels/fewshot.tmpl");
    VectorIndex empty;
    Gateway gw(test::scripted_backend([](const ChatRequest&) { return std::string(); }), nullptr,
               {1, ReplayMode::kReplay});
    CHECK_THROWS_AS(plan_fewshot(litcovid_doc(), t, litcovid_config(), empty, gw, options()),
                    Error);
  }

  TEST_CASE("two-step plan: free reasoning then structurization with the previous answer") {
    auto t = load_template(test::templates_dir() + "/labels/two-step.tmpl");
    PlanOptions o = options();
    o.two_step_as_schema = false;
    o.reasoning_max_tokens = 700;
    auto plan = plan_two_step(litcovid_doc(), t, litcovid_config(), o);
    REQUIRE(plan.steps.size() == 2);
    CHECK(!plan.steps[0].response_schema.has_value());
    CHECK(plan.steps[0].max_tokens == 700);
    CHECK(plan.steps[1].messages[1].content.find("{previous_answer}") != std::string::npos);

    // executing the plan feeds step-1 output into step 2 verbatim
    Gateway gw(test::scripted_backend([](const ChatRequest& r) {
                 if (r.messages.back().content.find("{previous_answer}") != std::string::npos) {
                   throw Error("placeholder leaked into the wire request");
                 }
                 if (r.messages.back().content.find("STEP1-ANALYSIS") != std::string::npos) {
                   return std::string("{\"Treatment\": true}");
                 }
                 return std::string("STEP1-ANALYSIS");
               }),
               nullptr, {1, ReplayMode::kReplay});
    auto exec = execute_plan(plan, gw, o);
    REQUIRE(exec.responses.size() == 2);
    CHECK(exec.responses[0] == "STEP1-ANALYSIS");
    CHECK(exec.responses[1] == "{\"Treatment\": true}");
  }

  TEST_CASE("schema mode places intermediate_steps strictly first") {
    auto t = load_template(test::templates_dir() + "/labels/two-step.tmpl");
    PlanOptions o = options();
    o.two_step_as_schema = true;
    auto plan = plan_two_step(litcovid_doc(), t, litcovid_config(), o);
    REQUIRE(plan.steps.size() == 1);
    REQUIRE(plan.steps[0].response_schema.has_value());

    // assert on the serialized key order, not the parsed object
    const std::string& schema = *plan.steps[0].response_schema;
    size_t steps_pos = schema.find("\"intermediate_steps\"");
    REQUIRE(steps_pos != std::string::npos);
    for (const auto& label : litcovid_config().label_vocabulary) {
      size_t label_pos = schema.find("\"" + label + "\"");
      REQUIRE(label_pos != std::string::npos);
      CHECK(steps_pos < label_pos);
    }
  }

  TEST_CASE("two-step plan requires the section texts") {
    auto t = load_template(test::templates_dir() + "/labels/basic.tmpl");
    PlanOptions o = options();
    o.two_step_as_schema = false;
    CHECK_THROWS_WITH_AS(plan_two_step(litcovid_doc(), t, litcovid_config(), o),
                         doctest::Contains("reasoning"), Error);
  }

  TEST_CASE("task config loader validates required fields") {
    test::TempDir tmp("taskcfg");
    write_file(tmp.file("bad.json"), R"({"dataset_id": "x", "task": "labels"})");
    CHECK_THROWS_WITH_AS(load_task_config(tmp.file("bad.json")),
                         doctest::Contains("label_vocabulary"), Error);
    write_file(tmp.file("ok.json"),
               R"({"dataset_id": "x", "task": "re", "entity_types": ["A", "B"]})");
    auto c = load_task_config(tmp.file("ok.json"));
    CHECK(c.task == Task::kRe);
    CHECK(!c.typed_relations());
  }
}
