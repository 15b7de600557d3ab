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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biomine/corpus.hpp"
#include "biomine/fewshot.hpp"
#include "biomine/gateway.hpp"
#include "biomine/guideline.hpp"
#include "biomine/parse.hpp"
#include "biomine/prompt.hpp"

namespace biomine {

enum class Strategy {
  kBasic,
  kFewshot,
  kTwoStep,
  kFewshotGuideline,
  kTwoStepGuideline,
  kInlineGuideline,
};

const char* strategy_name(Strategy s);
std::optional<Strategy> strategy_from_string(const std::string& s);

// Templates a run may need, loaded from a directory with conventional file
// names (basic.tmpl, fewshot.tmpl, two-step.tmpl, guideline-*.tmpl,
// inline.tmpl).
struct TemplateSet {
  std::optional<PromptTemplate> basic;
  std::optional<PromptTemplate> fewshot;
  std::optional<PromptTemplate> two_step;
  WorkflowTemplates workflow;

  static TemplateSet load(const std::string& dir);
};

struct PredictionRecord {
  std::string doc_id;
  std::vector<std::string> raw_responses;
  ParsedAnnotation annotation;
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
  std::vector<std::string> fewshot_doc_ids;
  int workflow_calls[3] = {0, 0, 0};
};

std::string prediction_to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const std::string& line, const std::string& origin);

struct AnnotatorConfig {
  Strategy strategy = Strategy::kBasic;
  PlanOptions plan;
  bool two_step_as_schema = false;
  std::size_t inline_threshold = 2500;
};

// Runs one document through the configured strategy: prompt planning, model
// calls, and response parsing.
class Annotator {
 public:
  Annotator(TaskConfig task, TemplateSet templates, Gateway& gateway, AnnotatorConfig config,
            const VectorIndex* index = nullptr, const GuidelineStore* store = nullptr);

  // `input` carries the document plus, for RE tasks, the known entity
  // mentions the relation step works over.
  PredictionRecord annotate(const AnnotatedDoc& input);

  const TaskConfig& task() const { return task_; }

 private:
  PredictionRecord from_plan(const AnnotatedDoc& input, const PromptPlan& plan);
  std::string fewshot_block(const Document& doc);

  TaskConfig task_;
  TemplateSet templates_;
  Gateway& gateway_;
  AnnotatorConfig config_;
  const VectorIndex* index_;
  const GuidelineStore* store_;
};

// Converts a parsed annotation into an AnnotatedDoc for evaluation.
AnnotatedDoc to_annotated_doc(const Document& doc, const ParsedAnnotation& annotation);

}  // namespace biomine
