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

#include "biomine/annotate.hpp"

#include <filesystem>

#include <nlohmann/json.hpp>

namespace biomine {

namespace {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kBasic: return "basic";
    case Strategy::kFewshot: return "fewshot";
    case Strategy::kTwoStep: return "two-step";
    case Strategy::kFewshotGuideline: return "fewshot+guideline";
    case Strategy::kTwoStepGuideline: return "two-step+guideline";
    case Strategy::kInlineGuideline: return "inline-guideline";
  }
  return "unknown";
}

std::optional<Strategy> strategy_from_string(const std::string& s) {
  if (s == "basic") return Strategy::kBasic;
  if (s == "fewshot") return Strategy::kFewshot;
  if (s == "two-step") return Strategy::kTwoStep;
  if (s == "fewshot+guideline") return Strategy::kFewshotGuideline;
  if (s == "two-step+guideline") return Strategy::kTwoStepGuideline;
  if (s == "inline-guideline") return Strategy::kInlineGuideline;
  return std::nullopt;
}

TemplateSet TemplateSet::load(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("template directory not found: " + dir);
  TemplateSet set;
  auto maybe = [&](const char* name) -> std::optional<PromptTemplate> {
    fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) return std::nullopt;
    return load_template(p.string());
  };
  set.basic = maybe("basic.tmpl");
  set.fewshot = maybe("fewshot.tmpl");
  set.two_step = maybe("two-step.tmpl");
  set.workflow.re_pair_prediction = maybe("guideline-pairs.tmpl");
  set.workflow.re_type_classification = maybe("guideline-types.tmpl");
  set.workflow.re_rule_validation = maybe("guideline-validate.tmpl");
  set.workflow.ner_preliminary = maybe("guideline-preliminary.tmpl");
  set.workflow.ner_validation = maybe("guideline-revision.tmpl");
  set.workflow.inline_single = maybe("inline.tmpl");
  return set;
}

std::string prediction_to_json(const PredictionRecord& record) {
  ordered_json j;
  j["doc_id"] = record.doc_id;
  j["raw_responses"] = record.raw_responses;
  ordered_json ann;
  ann["alignment_quality"] = alignment_quality_name(record.annotation.alignment_quality);
  ann["mentions"] = json::array();
  for (const auto& m : record.annotation.mentions) {
    ann["mentions"].push_back({{"type", m.entity_type},
                               {"start", m.start},
                               {"end", m.end},
                               {"surface", m.surface},
                               {"concept_id", m.concept_id}});
  }
  ann["relations"] = json::array();
  for (const auto& r : record.annotation.relations) {
    ordered_json jr;
    jr["subject"] = r.subject_id;
    jr["object"] = r.object_id;
    if (r.relation_type) jr["type"] = *r.relation_type;
    ann["relations"].push_back(std::move(jr));
  }
  ann["labels"] = json::array();
  for (const auto& l : record.annotation.labels) ann["labels"].push_back(l);
  j["annotation"] = std::move(ann);
  j["warnings"] = record.annotation.warnings;
  j["prompt_tokens"] = record.prompt_tokens;
  j["completion_tokens"] = record.completion_tokens;
  j["fewshot_doc_ids"] = record.fewshot_doc_ids;
  j["workflow_calls"] = {record.workflow_calls[0], record.workflow_calls[1],
                         record.workflow_calls[2]};
  // raw model output may contain arbitrary bytes; never let serialization throw
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

PredictionRecord prediction_from_json(const std::string& line, const std::string& origin) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(origin + ": bad prediction record");
  PredictionRecord rec;
  rec.doc_id = j.at("doc_id").get<std::string>();
  if (j.contains("raw_responses"))
    rec.raw_responses = j["raw_responses"].get<std::vector<std::string>>();
  const auto& ann = j.at("annotation");
  std::string q = ann.value("alignment_quality", "exact");
  rec.annotation.alignment_quality = q == "degraded"  ? AlignmentQuality::kDegraded
                                     : q == "repaired" ? AlignmentQuality::kRepaired
                                                       : AlignmentQuality::kExact;
  for (const auto& jm : ann.value("mentions", json::array())) {
    Mention m;
    m.entity_type = jm.at("type").get<std::string>();
    m.start = jm.at("start").get<std::size_t>();
    m.end = jm.at("end").get<std::size_t>();
    m.surface = jm.at("surface").get<std::string>();
    m.concept_id = jm.value("concept_id", "");
    rec.annotation.mentions.push_back(std::move(m));
  }
  for (const auto& jr : ann.value("relations", json::array())) {
    RelationRecord r;
    r.subject_id = jr.at("subject").get<std::string>();
    r.object_id = jr.at("object").get<std::string>();
    if (jr.contains("type")) r.relation_type = jr["type"].get<std::string>();
    rec.annotation.relations.push_back(std::move(r));
  }
  for (const auto& l : ann.value("labels", json::array())) {
    rec.annotation.labels.insert(l.get<std::string>());
  }
  if (j.contains("warnings"))
    rec.annotation.warnings = j["warnings"].get<std::vector<std::string>>();
  rec.prompt_tokens = j.value("prompt_tokens", 0);
  rec.completion_tokens = j.value("completion_tokens", 0);
  if (j.contains("fewshot_doc_ids"))
    rec.fewshot_doc_ids = j["fewshot_doc_ids"].get<std::vector<std::string>>();
  if (j.contains("workflow_calls")) {
    auto wc = j["workflow_calls"].get<std::vector<int>>();
    for (size_t i = 0; i < wc.size() && i < 3; ++i) rec.workflow_calls[i] = wc[i];
  }
  return rec;
}

Annotator::Annotator(TaskConfig task, TemplateSet templates, Gateway& gateway,
                     AnnotatorConfig config, const VectorIndex* index,
                     const GuidelineStore* store)
    : task_(std::move(task)),
      templates_(std::move(templates)),
      gateway_(gateway),
      config_(std::move(config)),
      index_(index),
      store_(store) {
  switch (config_.strategy) {
    case Strategy::kBasic:
      if (!templates_.basic) throw Error("annotator: basic strategy needs basic.tmpl");
      break;
    case Strategy::kFewshot:
      if (!templates_.fewshot) throw Error("annotator: fewshot strategy needs fewshot.tmpl");
      if (!index_) throw Error("annotator: fewshot strategy needs an example index");
      break;
    case Strategy::kTwoStep:
      if (!templates_.two_step) throw Error("annotator: two-step strategy needs two-step.tmpl");
      break;
    case Strategy::kFewshotGuideline:
      if (!index_) throw Error("annotator: fewshot+guideline needs an example index");
      [[fallthrough]];
    case Strategy::kTwoStepGuideline:
      if (!store_) throw Error("annotator: guideline strategies need a guideline store");
      break;
    case Strategy::kInlineGuideline:
      if (!store_) throw Error("annotator: inline-guideline needs a guideline store");
      if (!templates_.workflow.inline_single) throw Error("annotator: missing inline.tmpl");
      break;
  }
}

std::string Annotator::fewshot_block(const Document& doc) {
  auto query_vec = gateway_.embed({doc.full_text()}, config_.plan.embed_model).front();
  auto picked =
      nearest(*index_, query_vec, static_cast<size_t>(config_.plan.fewshot_k), {doc.doc_id});
  std::reverse(picked.begin(), picked.end());
  return render_examples_block(picked);
}

PredictionRecord Annotator::from_plan(const AnnotatedDoc& input, const PromptPlan& plan) {
  PredictionRecord rec;
  rec.doc_id = input.doc.doc_id;
  rec.fewshot_doc_ids = plan.fewshot_doc_ids;
  ExecutedPlan exec = execute_plan(plan, gateway_, config_.plan);
  rec.raw_responses = exec.responses;
  rec.prompt_tokens = exec.prompt_tokens;
  rec.completion_tokens = exec.completion_tokens;

  const std::string& final_text = exec.responses.back();
  switch (plan.parse_as) {
    case OutputContract::kTaggedText: {
      std::set<std::string> allowed(task_.entity_types.begin(), task_.entity_types.end());
      rec.annotation = parse_ner(input.doc, final_text, allowed);
      break;
    }
    case OutputContract::kTuples:
      rec.annotation =
          parse_re(final_text, std::nullopt, EntityCatalog::from_mentions(input.mentions));
      break;
    case OutputContract::kTriples:
      rec.annotation = parse_re(final_text, task_.relation_types,
                                EntityCatalog::from_mentions(input.mentions));
      break;
    case OutputContract::kJsonLabels:
      rec.annotation = parse_labels(final_text, task_.label_vocabulary);
      break;
  }
  for (const auto& w : plan.warnings) rec.annotation.warnings.push_back(w);
  return rec;
}

PredictionRecord Annotator::annotate(const AnnotatedDoc& input) {
  const Document& doc = input.doc;
  switch (config_.strategy) {
    case Strategy::kBasic:
      return from_plan(input, plan_basic(input, *templates_.basic, task_, config_.plan));
    case Strategy::kFewshot:
      return from_plan(input, plan_fewshot(input, *templates_.fewshot, task_, *index_,
                                           gateway_, config_.plan));
    case Strategy::kTwoStep: {
      PlanOptions opts = config_.plan;
      opts.two_step_as_schema = config_.two_step_as_schema && task_.task == Task::kLabels;
      return from_plan(input, plan_two_step(input, *templates_.two_step, task_, opts));
    }
    case Strategy::kFewshotGuideline:
    case Strategy::kTwoStepGuideline:
    case Strategy::kInlineGuideline: {
      WorkflowOptions wf;
      wf.plan = config_.plan;
      wf.two_step = config_.strategy == Strategy::kTwoStepGuideline;
      wf.inline_threshold = config_.inline_threshold;
      if (config_.strategy == Strategy::kFewshotGuideline) {
        wf.examples_block = fewshot_block(doc);
      }
      WorkflowResult result;
      if (config_.strategy == Strategy::kInlineGuideline) {
        result = inline_guideline(doc, input.mentions, *store_, gateway_, templates_.workflow,
                                  task_, wf);
      } else if (task_.task == Task::kRe) {
        result = run_re_workflow(doc, input.mentions, *store_, gateway_, templates_.workflow,
                                 task_, wf);
      } else if (task_.task == Task::kNer) {
        result = run_ner_workflow(doc, *store_, gateway_, templates_.workflow, task_, wf);
      } else {
        throw Error("annotator: guideline workflows cover ner and re tasks only");
      }
      PredictionRecord rec;
      rec.doc_id = doc.doc_id;
      rec.annotation = std::move(result.annotation);
      rec.raw_responses = std::move(result.raw_responses);
      rec.prompt_tokens = result.prompt_tokens;
      rec.completion_tokens = result.completion_tokens;
      rec.workflow_calls[0] = result.step1_calls;
      rec.workflow_calls[1] = result.step2_calls;
      rec.workflow_calls[2] = result.step3_calls;
      return rec;
    }
  }
  throw Error("annotator: unhandled strategy");
}

AnnotatedDoc to_annotated_doc(const Document& doc, const ParsedAnnotation& annotation) {
  AnnotatedDoc out;
  out.doc = doc;
  out.mentions = annotation.mentions;
  out.relations = annotation.relations;
  out.labels = annotation.labels;
  return out;
}

}  // namespace biomine
