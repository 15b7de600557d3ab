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

#include "biomine/prompt.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

namespace biomine {

namespace {
using nlohmann::json;
using nlohmann::ordered_json;
}  // namespace

const char* output_contract_name(OutputContract c) {
  switch (c) {
    case OutputContract::kJsonLabels: return "json-labels";
    case OutputContract::kTaggedText: return "tagged-text";
    case OutputContract::kTuples: return "tuples";
    case OutputContract::kTriples: return "triples";
  }
  return "unknown";
}

std::optional<OutputContract> output_contract_from_string(const std::string& s) {
  if (s == "json-labels") return OutputContract::kJsonLabels;
  if (s == "tagged-text") return OutputContract::kTaggedText;
  if (s == "tuples") return OutputContract::kTuples;
  if (s == "triples") return OutputContract::kTriples;
  return std::nullopt;
}

namespace {

std::optional<Task> task_from_string(const std::string& s) {
  if (s == "ner") return Task::kNer;
  if (s == "re") return Task::kRe;
  if (s == "labels" || s == "classification") return Task::kLabels;
  return std::nullopt;
}

const char* task_name(Task t) {
  switch (t) {
    case Task::kNer: return "ner";
    case Task::kRe: return "re";
    case Task::kLabels: return "labels";
  }
  return "unknown";
}

}  // namespace

PromptTemplate parse_template(const std::string& content, const std::string& origin) {
  PromptTemplate t;
  std::istringstream in(content);
  std::string line;
  bool in_front_matter = true;
  std::string section;
  std::map<std::string, std::string> sections;
  bool saw_id = false, saw_task = false, saw_contract = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (in_front_matter) {
      if (trim(line) == "---") {
        in_front_matter = false;
        continue;
      }
      if (trim(line).empty()) continue;
      size_t colon = line.find(':');
      if (colon == std::string::npos) {
        throw Error(origin + ": expected `key: value` in template front-matter, got: " + line);
      }
      std::string key = trim(line.substr(0, colon));
      std::string value = trim(line.substr(colon + 1));
      if (key == "template_id") {
        t.template_id = value;
        saw_id = true;
      } else if (key == "task") {
        auto task = task_from_string(value);
        if (!task) throw Error(origin + ": unknown task " + value);
        t.task = *task;
        saw_task = true;
      } else if (key == "output_contract") {
        auto c = output_contract_from_string(value);
        if (!c) throw Error(origin + ": unknown output_contract " + value);
        t.output_contract = *c;
        saw_contract = true;
      } else {
        throw Error(origin + ": unknown front-matter key " + key);
      }
      continue;
    }
    std::string trimmed = trim(line);
    if (trimmed.size() > 4 && starts_with(trimmed, "== ") &&
        trimmed.substr(trimmed.size() - 3) == " ==") {
      section = trim(trimmed.substr(2, trimmed.size() - 5));
      continue;
    }
    if (section.empty()) {
      if (!trimmed.empty()) throw Error(origin + ": text before first `== section ==` header");
      continue;
    }
    sections[section] += line;
    sections[section] += "\n";
  }

  if (!saw_id || !saw_task || !saw_contract) {
    throw Error(origin + ": front-matter must set template_id, task, output_contract");
  }
  for (const auto& [name, body] : sections) {
    std::string text = trim(body);
    if (name == "system") t.system_text = text;
    else if (name == "user") t.user_text = text;
    else if (name == "reasoning") t.reasoning_text = text;
    else if (name == "structurize") t.structurize_text = text;
    else throw Error(origin + ": unknown section " + name);
  }
  if (t.system_text.empty()) throw Error(origin + ": missing system section");
  if (t.user_text.empty() && !t.supports_two_step()) {
    throw Error(origin + ": template needs a user section or reasoning+structurize sections");
  }
  return t;
}

PromptTemplate load_template(const std::string& path) {
  return parse_template(read_file(path), path);
}

std::string render_template_file(const PromptTemplate& t) {
  std::ostringstream out;
  out << "template_id: " << t.template_id << "\n";
  out << "task: " << task_name(t.task) << "\n";
  out << "output_contract: " << output_contract_name(t.output_contract) << "\n";
  out << "---\n";
  out << "== system ==\n" << t.system_text << "\n";
  if (!t.user_text.empty()) out << "\n== user ==\n" << t.user_text << "\n";
  if (!t.reasoning_text.empty()) out << "\n== reasoning ==\n" << t.reasoning_text << "\n";
  if (!t.structurize_text.empty()) out << "\n== structurize ==\n" << t.structurize_text << "\n";
  return out.str();
}

const std::set<std::string>& known_placeholders() {
  static const std::set<std::string> kNames = {
      "document",        "examples",        "guideline_excerpt", "label_definitions",
      "previous_answer", "candidate_pairs", "entity_list",       "preliminary",
      "records",         "entity_types",    "relation_types",    "label_keys",
  };
  return kNames;
}

std::set<std::string> placeholders_in(const std::string& text) {
  std::set<std::string> found;
  size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    size_t end = text.find('}', pos);
    if (end == std::string::npos) break;
    std::string name = text.substr(pos + 1, end - pos - 1);
    if (known_placeholders().count(name)) found.insert(name);
    ++pos;
  }
  return found;
}

std::string substitute(const std::string& text, const std::map<std::string, std::string>& values,
                       const std::string& origin) {
  std::string out;
  out.reserve(text.size());
  size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == '{') {
      size_t end = text.find('}', pos);
      if (end != std::string::npos) {
        std::string name = text.substr(pos + 1, end - pos - 1);
        if (known_placeholders().count(name)) {
          auto it = values.find(name);
          if (it == values.end()) {
            throw Error(origin + ": unresolved placeholder {" + name + "}");
          }
          out += it->second;
          pos = end + 1;
          continue;
        }
      }
    }
    out.push_back(text[pos]);
    ++pos;
  }
  return out;
}

TaskConfig load_task_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": bad task config: " + e.what());
  }
  TaskConfig c;
  c.dataset_id = j.at("dataset_id").get<std::string>();
  auto task = task_from_string(j.at("task").get<std::string>());
  if (!task) throw Error(path + ": unknown task");
  c.task = *task;
  if (j.contains("input_unit")) {
    std::string unit = j["input_unit"].get<std::string>();
    if (unit == "abstract-only") c.abstract_only = true;
    else if (unit != "title+abstract") throw Error(path + ": input_unit must be title+abstract|abstract-only");
  }
  if (j.contains("entity_types")) c.entity_types = j["entity_types"].get<std::vector<std::string>>();
  if (j.contains("relation_types"))
    c.relation_types = j["relation_types"].get<std::vector<std::string>>();
  if (j.contains("label_vocabulary"))
    c.label_vocabulary = j["label_vocabulary"].get<std::vector<std::string>>();
  if (j.contains("label_definitions")) {
    for (const auto& [k, v] : j["label_definitions"].items()) {
      c.label_definitions[k] = v.get<std::string>();
    }
  }
  if (j.contains("category_order"))
    c.category_order = j["category_order"].get<std::vector<std::string>>();
  if (c.task == Task::kLabels && c.label_vocabulary.empty()) {
    throw Error(path + ": label task requires label_vocabulary");
  }
  if (c.task == Task::kNer && c.entity_types.empty()) {
    throw Error(path + ": ner task requires entity_types");
  }
  return c;
}

std::string label_schema(const std::vector<std::string>& vocabulary,
                         bool intermediate_steps_first) {
  ordered_json properties;
  ordered_json required = json::array();
  if (intermediate_steps_first) {
    properties["intermediate_steps"] = {{"type", "string"}};
    required.push_back("intermediate_steps");
  }
  for (const auto& label : vocabulary) {
    properties[label] = {{"type", "boolean"}};
    required.push_back(label);
  }
  ordered_json schema;
  schema["type"] = "object";
  schema["properties"] = std::move(properties);
  schema["required"] = std::move(required);
  schema["additionalProperties"] = false;
  return schema.dump();
}

namespace {

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> base_placeholder_values(const AnnotatedDoc& doc,
                                                           const TaskConfig& config) {
  std::map<std::string, std::string> values;
  values["document"] = (config.abstract_only && !doc.doc.abstract_text.empty())
                           ? doc.doc.abstract_text
                           : doc.doc.full_text();
  std::string entity_lines;
  for (const auto& m : doc.mentions) {
    entity_lines += m.entity_type + ": " + m.surface + "\n";
  }
  values["entity_list"] = trim(entity_lines);
  values["entity_types"] = join(config.entity_types, ", ");
  values["relation_types"] = join(config.relation_types, ", ");
  values["label_keys"] = join(config.label_vocabulary, ", ");
  std::string defs;
  for (const auto& label : config.label_vocabulary) {
    defs += "- " + label;
    auto it = config.label_definitions.find(label);
    if (it != config.label_definitions.end()) defs += ": " + it->second;
    defs += "\n";
  }
  values["label_definitions"] = trim(defs);
  return values;
}

std::string render_examples_block(const std::vector<IndexedExample>& examples) {
  std::ostringstream out;
  for (size_t i = 0; i < examples.size(); ++i) {
    out << "Example " << (i + 1) << ":\n";
    out << "Input: " << examples[i].input_text << "\n";
    out << "Output: " << examples[i].rendered_target << "\n";
    if (i + 1 < examples.size()) out << "\n";
  }
  return out.str();
}

namespace {

PlanStep make_step(const PromptTemplate& tmpl, const std::string& user_text,
                   const std::map<std::string, std::string>& values,
                   std::optional<std::string> schema, std::optional<int> max_tokens) {
  PlanStep step;
  step.messages.push_back({"system", substitute(tmpl.system_text, values, tmpl.template_id)});
  step.messages.push_back({"user", substitute(user_text, values, tmpl.template_id)});
  step.response_schema = std::move(schema);
  step.max_tokens = max_tokens;
  return step;
}

std::optional<std::string> schema_for(const PromptTemplate& tmpl, const TaskConfig& config,
                                      bool intermediate_first) {
  if (tmpl.output_contract != OutputContract::kJsonLabels) return std::nullopt;
  return label_schema(config.label_vocabulary, intermediate_first);
}

void require_task_match(const PromptTemplate& tmpl, const TaskConfig& config) {
  if (tmpl.task != config.task) {
    throw Error("plan: template " + tmpl.template_id + " targets a different task than dataset " +
                config.dataset_id);
  }
}

}  // namespace

PromptPlan plan_basic(const AnnotatedDoc& doc, const PromptTemplate& tmpl,
                      const TaskConfig& config, const PlanOptions&) {
  require_task_match(tmpl, config);
  auto used = placeholders_in(tmpl.system_text + tmpl.user_text);
  if (used.count("examples")) {
    throw Error("plan_basic: template " + tmpl.template_id +
                " has an {examples} placeholder; use the fewshot strategy");
  }
  PromptPlan plan;
  plan.parse_as = tmpl.output_contract;
  auto values = base_placeholder_values(doc, config);
  plan.steps.push_back(
      make_step(tmpl, tmpl.user_text, values, schema_for(tmpl, config, false), std::nullopt));
  return plan;
}

PromptPlan plan_fewshot(const AnnotatedDoc& doc, const PromptTemplate& tmpl,
                        const TaskConfig& config, const VectorIndex& index, Gateway& gateway,
                        const PlanOptions& options) {
  require_task_match(tmpl, config);
  if (index.size() == 0) throw Error("plan_fewshot: empty example index");
  if (options.fewshot_k < 1) throw Error("plan_fewshot: k must be >= 1");
  auto used = placeholders_in(tmpl.user_text + tmpl.system_text);
  if (!used.count("examples")) {
    throw Error("plan_fewshot: template " + tmpl.template_id + " lacks an {examples} placeholder");
  }

  auto query_vec = gateway.embed({doc.doc.full_text()}, options.embed_model).front();
  auto picked =
      nearest(index, query_vec, static_cast<size_t>(options.fewshot_k), {doc.doc.doc_id});

  PromptPlan plan;
  plan.parse_as = tmpl.output_contract;
  if (picked.size() < static_cast<size_t>(options.fewshot_k)) {
    plan.warnings.push_back("plan_fewshot: only " + std::to_string(picked.size()) +
                            " examples available for k=" + std::to_string(options.fewshot_k));
  }
  // nearest() returns best-first; emit most-similar last so it sits next to
  // the query document.
  std::reverse(picked.begin(), picked.end());
  for (const auto& ex : picked) plan.fewshot_doc_ids.push_back(ex.doc_id);

  auto values = base_placeholder_values(doc, config);
  values["examples"] = render_examples_block(picked);
  plan.steps.push_back(
      make_step(tmpl, tmpl.user_text, values, schema_for(tmpl, config, false), std::nullopt));
  return plan;
}

PromptPlan plan_two_step(const AnnotatedDoc& doc, const PromptTemplate& tmpl,
                         const TaskConfig& config, const PlanOptions& options) {
  require_task_match(tmpl, config);
  PromptPlan plan;
  plan.parse_as = tmpl.output_contract;
  auto values = base_placeholder_values(doc, config);

  if (options.two_step_as_schema) {
    if (tmpl.output_contract != OutputContract::kJsonLabels) {
      throw Error("plan_two_step: schema mode only applies to json-labels templates");
    }
    if (tmpl.user_text.empty()) {
      throw Error("plan_two_step: template " + tmpl.template_id + " lacks a user section");
    }
    plan.steps.push_back(
        make_step(tmpl, tmpl.user_text, values, schema_for(tmpl, config, true), std::nullopt));
    return plan;
  }

  if (!tmpl.supports_two_step()) {
    throw Error("plan_two_step: template " + tmpl.template_id +
                " lacks reasoning/structurize sections");
  }
  // Step 1: free-form analysis, no format constraint, no schema.
  plan.steps.push_back(
      make_step(tmpl, tmpl.reasoning_text, values, std::nullopt, options.reasoning_max_tokens));
  // Step 2: structurization over the step-1 answer.
  auto step2_values = values;
  step2_values["previous_answer"] = "{previous_answer}";  // resolved at execution
  plan.steps.push_back(make_step(tmpl, tmpl.structurize_text, step2_values,
                                 schema_for(tmpl, config, false), std::nullopt));
  return plan;
}

ExecutedPlan execute_plan(const PromptPlan& plan, Gateway& gateway, const PlanOptions& options) {
  ExecutedPlan out;
  std::string previous;
  for (size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& step = plan.steps[i];
    ChatRequest req;
    req.model = options.model;
    req.temperature = options.temperature;
    req.response_schema = step.response_schema;
    req.max_tokens = step.max_tokens;
    for (const auto& m : step.messages) {
      std::string content = m.content;
      if (i > 0) {
        // plain textual replacement: step bodies may carry arbitrary braces
        const std::string needle = "{previous_answer}";
        size_t at = 0;
        while ((at = content.find(needle, at)) != std::string::npos) {
          content.replace(at, needle.size(), previous);
          at += previous.size();
        }
      }
      req.messages.push_back({m.role, content});
    }
    ChatResponse resp = gateway.complete(req);
    out.prompt_tokens += resp.prompt_tokens;
    out.completion_tokens += resp.completion_tokens;
    previous = resp.content;
    out.responses.push_back(std::move(resp.content));
  }
  return out;
}

}  // namespace biomine
