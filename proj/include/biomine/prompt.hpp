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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "biomine/corpus.hpp"
#include "biomine/fewshot.hpp"
#include "biomine/gateway.hpp"

namespace biomine {

enum class OutputContract { kJsonLabels, kTaggedText, kTuples, kTriples };

const char* output_contract_name(OutputContract c);
std::optional<OutputContract> output_contract_from_string(const std::string& s);

// Prompt text lives in external template files so the optimizer can rewrite
// it without touching code. Format: `key: value` front-matter, a `---` line,
// then `== section ==` blocks (system, user, reasoning, structurize).
struct PromptTemplate {
  std::string template_id;
  Task task = Task::kNer;
  OutputContract output_contract = OutputContract::kTaggedText;
  std::string system_text;
  std::string user_text;
  std::string reasoning_text;    // two-step, step 1
  std::string structurize_text;  // two-step, step 2; references {previous_answer}

  bool supports_two_step() const { return !reasoning_text.empty() && !structurize_text.empty(); }
};

PromptTemplate parse_template(const std::string& content, const std::string& origin);
PromptTemplate load_template(const std::string& path);
std::string render_template_file(const PromptTemplate& t);

// {name} substitution over the fixed placeholder vocabulary; unknown braces
// pass through untouched (prompts legitimately contain JSON snippets).
const std::set<std::string>& known_placeholders();
std::set<std::string> placeholders_in(const std::string& text);
std::string substitute(const std::string& text, const std::map<std::string, std::string>& values,
                       const std::string& origin);

// Per-dataset task description: types, vocabularies, diagnostics axis.
struct TaskConfig {
  std::string dataset_id;
  Task task = Task::kNer;
  bool abstract_only = false;  // {document} drops the title when set
  std::vector<std::string> entity_types;
  std::vector<std::string> relation_types;  // empty = untyped tuple task
  std::vector<std::string> label_vocabulary;
  std::map<std::string, std::string> label_definitions;
  std::vector<std::string> category_order;

  bool typed_relations() const { return !relation_types.empty(); }
};

TaskConfig load_task_config(const std::string& path);

struct PlanStep {
  std::vector<ChatMessage> messages;  // content may hold {previous_answer}
  std::optional<std::string> response_schema;
  std::optional<int> max_tokens;
};

struct PromptPlan {
  std::vector<PlanStep> steps;
  OutputContract parse_as = OutputContract::kTaggedText;
  std::vector<std::string> fewshot_doc_ids;
  std::vector<std::string> warnings;
};

struct PlanOptions {
  std::string model;
  double temperature = 0.0;
  int fewshot_k = 3;
  // single schema-constrained call with a leading intermediate_steps field,
  // available for JSON-label tasks only
  bool two_step_as_schema = false;
  std::optional<int> reasoning_max_tokens;
  std::string embed_model;
};

// JSON schema whose property order is meaningful: when
// `intermediate_steps_first`, that field precedes every label key.
std::string label_schema(const std::vector<std::string>& vocabulary,
                         bool intermediate_steps_first);

PromptPlan plan_basic(const AnnotatedDoc& doc, const PromptTemplate& tmpl,
                      const TaskConfig& config, const PlanOptions& options);

// Dynamic K-shot: K nearest training examples by embedding similarity, the
// most similar one rendered last (adjacent to the query).
PromptPlan plan_fewshot(const AnnotatedDoc& doc, const PromptTemplate& tmpl,
                        const TaskConfig& config, const VectorIndex& index, Gateway& gateway,
                        const PlanOptions& options);

PromptPlan plan_two_step(const AnnotatedDoc& doc, const PromptTemplate& tmpl,
                         const TaskConfig& config, const PlanOptions& options);

// Turns a plan into ChatRequests, feeding each step's output into the next
// step's {previous_answer}.
struct ExecutedPlan {
  std::vector<std::string> responses;
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
};

ExecutedPlan execute_plan(const PromptPlan& plan, Gateway& gateway, const PlanOptions& options);

// Shared placeholder values derived from a task config (entity type lists,
// label definitions, ...).
std::map<std::string, std::string> base_placeholder_values(const AnnotatedDoc& doc,
                                                           const TaskConfig& config);

std::string render_examples_block(const std::vector<IndexedExample>& examples);

}  // namespace biomine
