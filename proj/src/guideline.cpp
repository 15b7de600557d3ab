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

#include "biomine/guideline.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

namespace biomine {

namespace fs = std::filesystem;

const char* chunk_kind_name(ChunkKind k) {
  switch (k) {
    case ChunkKind::kRelationPairRequirements: return "relation-pair-requirements";
    case ChunkKind::kRelationTypeRequirements: return "relation-type-requirements";
    case ChunkKind::kNerSummary: return "ner-summary";
    case ChunkKind::kNerFullRules: return "ner-full-rules";
    case ChunkKind::kOtherRules: return "other-rules";
  }
  return "unknown";
}

std::optional<ChunkKind> chunk_kind_from_string(const std::string& s) {
  if (s == "relation-pair-requirements") return ChunkKind::kRelationPairRequirements;
  if (s == "relation-type-requirements") return ChunkKind::kRelationTypeRequirements;
  if (s == "ner-summary") return ChunkKind::kNerSummary;
  if (s == "ner-full-rules") return ChunkKind::kNerFullRules;
  if (s == "other-rules") return ChunkKind::kOtherRules;
  return std::nullopt;
}

TypePair make_type_pair(const std::string& a, const std::string& b) {
  return a <= b ? TypePair{a, b} : TypePair{b, a};
}

namespace {

GuidelineChunk parse_chunk(const std::string& content, const std::string& origin) {
  GuidelineChunk chunk;
  std::istringstream in(content);
  std::string line;
  bool in_front_matter = true;
  std::string body;
  bool saw_kind = false;
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
        throw Error(origin + ": expected `key: value` in chunk front-matter");
      }
      std::string key = trim(line.substr(0, colon));
      std::string value = trim(line.substr(colon + 1));
      if (key == "chunk_id") {
        chunk.chunk_id = value;
      } else if (key == "kind") {
        auto kind = chunk_kind_from_string(value);
        if (!kind) throw Error(origin + ": unknown chunk kind " + value);
        chunk.kind = *kind;
        saw_kind = true;
      } else if (key == "entity_types") {
        auto parts = split(value, ',');
        if (parts.size() != 2) throw Error(origin + ": entity_types needs exactly two types");
        chunk.entity_type_key = make_type_pair(trim(parts[0]), trim(parts[1]));
      } else if (key == "relevant_to") {
        for (auto& p : split(value, ',')) chunk.relevant_types.push_back(trim(p));
      } else if (key == "annotated") {
        chunk.not_annotated = (lower(value) == "false" || lower(value) == "no");
      } else {
        throw Error(origin + ": unknown chunk front-matter key " + key);
      }
      continue;
    }
    body += line;
    body += "\n";
  }
  if (chunk.chunk_id.empty() || !saw_kind) {
    throw Error(origin + ": chunk front-matter must set chunk_id and kind");
  }
  if ((chunk.kind == ChunkKind::kRelationPairRequirements ||
       chunk.kind == ChunkKind::kRelationTypeRequirements) &&
      !chunk.entity_type_key) {
    throw Error(origin + ": " + std::string(chunk_kind_name(chunk.kind)) +
                " chunk needs entity_types");
  }
  chunk.body = trim(body);
  return chunk;
}

}  // namespace

GuidelineStore GuidelineStore::load(const std::string& dir) {
  GuidelineStore store;
  if (!fs::is_directory(dir)) throw Error("guideline store: not a directory: " + dir);
  store.dataset_id_ = fs::path(dir).filename().string();

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());

  std::set<std::string> ids;
  for (const auto& file : files) {
    std::string name = fs::path(file).filename().string();
    if (name == "pairs.conf") {
      std::istringstream in(read_file(file));
      std::string line;
      size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
          throw Error(file + ": line " + std::to_string(line_no) + ": expected `A, B = annotate|skip`");
        }
        auto parts = split(t.substr(0, eq), ',');
        if (parts.size() != 2) {
          throw Error(file + ": line " + std::to_string(line_no) + ": expected two entity types");
        }
        std::string policy = trim(t.substr(eq + 1));
        if (policy != "annotate" && policy != "skip") {
          throw Error(file + ": line " + std::to_string(line_no) + ": policy must be annotate|skip");
        }
        store.pair_policy_[make_type_pair(trim(parts[0]), trim(parts[1]))] = (policy == "annotate");
      }
      continue;
    }
    if (!name.ends_with(".txt")) continue;
    GuidelineChunk chunk = parse_chunk(read_file(file), file);
    if (!ids.insert(chunk.chunk_id).second) {
      throw Error(file + ": duplicate chunk_id " + chunk.chunk_id);
    }
    store.chunks_.push_back(std::move(chunk));
  }
  std::sort(store.chunks_.begin(), store.chunks_.end(),
            [](const GuidelineChunk& a, const GuidelineChunk& b) { return a.chunk_id < b.chunk_id; });
  return store;
}

std::size_t GuidelineStore::total_body_length() const {
  std::size_t total = 0;
  for (const auto& c : chunks_) total += c.body.size();
  return total;
}

std::optional<bool> GuidelineStore::pair_policy(const TypePair& pair) const {
  auto it = pair_policy_.find(pair);
  if (it != pair_policy_.end()) return it->second;
  // A not-annotated marker chunk doubles as a skip policy.
  for (const auto& c : chunks_) {
    if (c.kind == ChunkKind::kRelationPairRequirements && c.entity_type_key == pair &&
        c.not_annotated) {
      return false;
    }
  }
  return std::nullopt;
}

std::vector<const GuidelineChunk*> GuidelineStore::chunks_of_kind(
    ChunkKind kind, const std::optional<TypePair>& pair) const {
  std::vector<const GuidelineChunk*> out;
  for (const auto& c : chunks_) {
    if (c.kind != kind) continue;
    if (pair && c.entity_type_key && *c.entity_type_key != *pair) continue;
    if (pair && !c.entity_type_key &&
        (kind == ChunkKind::kRelationPairRequirements ||
         kind == ChunkKind::kRelationTypeRequirements)) {
      continue;
    }
    if (kind == ChunkKind::kOtherRules && pair && !c.relevant_types.empty()) {
      bool relevant = false;
      for (const auto& t : c.relevant_types) {
        if (t == pair->first || t == pair->second) relevant = true;
      }
      if (!relevant) continue;
    }
    out.push_back(&c);
  }
  return out;  // chunks_ already sorted by chunk_id
}

void GuidelineStore::check(bool relations_expected) const {
  if (!relations_expected) return;
  for (const auto& [pair, annotate] : pair_policy_) {
    if (!annotate) continue;
    auto found = chunks_of_kind(ChunkKind::kRelationPairRequirements, pair);
    if (found.empty()) {
      throw Error("guideline store " + dataset_id_ + ": pair " + pair.first + "-" + pair.second +
                  " is configured annotate but has no relation-pair-requirements chunk");
    }
  }
}

std::vector<const GuidelineChunk*> select_chunks(const GuidelineStore& store, ChunkKind kind,
                                                 const std::optional<TypePair>& pair) {
  auto out = store.chunks_of_kind(kind, pair);
  if (out.empty() && pair) {
    auto policy = store.pair_policy(*pair);
    if (policy.has_value() && *policy) {
      throw Error("select_chunks: no " + std::string(chunk_kind_name(kind)) + " chunk for pair " +
                  pair->first + "-" + pair->second);
    }
  }
  if (kind != ChunkKind::kOtherRules) {
    for (const auto* c : store.chunks_of_kind(ChunkKind::kOtherRules, pair)) out.push_back(c);
  }
  return out;
}

namespace {

std::string chunk_bodies(const std::vector<const GuidelineChunk*>& chunks) {
  std::string out;
  for (const auto* c : chunks) {
    if (!out.empty()) out += "\n\n";
    out += c->body;
  }
  return out;
}

// Executes one workflow call: single request, or reasoning+structurize when
// the template supports it and the options ask for it.
struct CallResult {
  std::string final_text;
  std::vector<std::string> responses;
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
};

CallResult workflow_call(const PromptTemplate& tmpl,
                         const std::map<std::string, std::string>& values, Gateway& gateway,
                         const WorkflowOptions& options) {
  PromptPlan plan;
  plan.parse_as = tmpl.output_contract;
  auto step = [&](const std::string& user_text, bool with_prev) {
    PlanStep s;
    s.messages.push_back({"system", substitute(tmpl.system_text, values, tmpl.template_id)});
    std::map<std::string, std::string> v = values;
    if (with_prev) v["previous_answer"] = "{previous_answer}";
    s.messages.push_back({"user", substitute(user_text, v, tmpl.template_id)});
    return s;
  };
  if (options.two_step && tmpl.supports_two_step()) {
    plan.steps.push_back(step(tmpl.reasoning_text, false));
    plan.steps.back().max_tokens = options.plan.reasoning_max_tokens;
    plan.steps.push_back(step(tmpl.structurize_text, true));
  } else {
    if (tmpl.user_text.empty()) {
      throw Error("workflow: template " + tmpl.template_id + " lacks a user section");
    }
    plan.steps.push_back(step(tmpl.user_text, false));
  }
  ExecutedPlan exec = execute_plan(plan, gateway, options.plan);
  CallResult out;
  out.final_text = exec.responses.back();
  out.responses = std::move(exec.responses);
  out.prompt_tokens = exec.prompt_tokens;
  out.completion_tokens = exec.completion_tokens;
  return out;
}

struct ConceptGroup {
  std::vector<std::string> ids;  // distinct concept ids, first-seen order
  EntityCatalog catalog;
};

// Distinct concept ids per entity type; mentions without a concept id fall
// back to their surface as the identifier.
std::map<std::string, ConceptGroup> group_by_type(const std::vector<Mention>& mentions,
                                                  EntityCatalog& catalog) {
  std::map<std::string, ConceptGroup> groups;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& m : mentions) {
    std::string id = m.concept_id.empty() ? m.surface : m.concept_id;
    catalog.add(m.surface, id);
    if (seen.insert({m.entity_type, id}).second) {
      groups[m.entity_type].ids.push_back(id);
    }
  }
  return groups;
}

std::string tuple_text(const std::string& a, const std::string& b, const EntityCatalog& catalog) {
  auto name = [&](const std::string& id) {
    const std::string* s = catalog.surface_of(id);
    return s ? *s : id;
  };
  return "(" + name(a) + ", " + name(b) + ")";
}

std::string records_text(const std::vector<RelationRecord>& records,
                         const EntityCatalog& catalog) {
  std::string out;
  for (const auto& r : records) {
    auto name = [&](const std::string& id) {
      const std::string* s = catalog.surface_of(id);
      return s ? *s : id;
    };
    out += "(" + name(r.subject_id) + ", " + name(r.object_id);
    if (r.relation_type) out += ", " + *r.relation_type;
    out += ")\n";
  }
  return out;
}

bool pair_in(const std::vector<RelationRecord>& records, const RelationRecord& r) {
  return std::any_of(records.begin(), records.end(),
                     [&](const RelationRecord& x) { return x.same_pair(r); });
}

}  // namespace

WorkflowResult run_re_workflow(const Document& doc, const std::vector<Mention>& entities,
                               const GuidelineStore& store, Gateway& gateway,
                               const WorkflowTemplates& templates, const TaskConfig& config,
                               const WorkflowOptions& options) {
  if (!templates.re_pair_prediction || !templates.re_rule_validation) {
    throw Error("run_re_workflow: pair-prediction and rule-validation templates required");
  }
  WorkflowResult result;
  auto& annotation = result.annotation;

  AnnotatedDoc doc_with_entities;
  doc_with_entities.doc = doc;
  doc_with_entities.mentions = entities;

  EntityCatalog catalog;
  auto groups = group_by_type(entities, catalog);

  // Present unordered type pairs, deterministic order.
  std::vector<TypePair> pairs;
  for (auto it = groups.begin(); it != groups.end(); ++it) {
    for (auto jt = it; jt != groups.end(); ++jt) {
      if (it == jt && it->second.ids.size() < 2) continue;
      pairs.push_back(make_type_pair(it->first, jt->first));
    }
  }

  const std::optional<std::vector<std::string>> type_vocab =
      config.typed_relations() ? std::optional(config.relation_types) : std::nullopt;

  std::vector<RelationRecord> final_records;
  for (const auto& pair : pairs) {
    auto policy = store.pair_policy(pair);
    if (!policy.has_value()) {
      throw Error("run_re_workflow: store " + store.dataset_id() + " has no policy for pair " +
                  pair.first + "-" + pair.second);
    }
    if (!*policy) continue;  // marked not annotated: no call at all

    // Candidates: every cross-type concept pair (or unordered intra-type
    // combination), distinct ids only.
    std::vector<RelationRecord> candidates;
    const auto& ids_a = groups[pair.first].ids;
    const auto& ids_b = groups[pair.second].ids;
    if (pair.first == pair.second) {
      for (size_t x = 0; x < ids_a.size(); ++x) {
        for (size_t y = x + 1; y < ids_a.size(); ++y) {
          candidates.push_back({ids_a[x], ids_a[y], std::nullopt});
        }
      }
    } else {
      for (const auto& a : ids_a) {
        for (const auto& b : ids_b) {
          if (a != b) candidates.push_back({a, b, std::nullopt});
        }
      }
    }
    if (candidates.empty()) continue;

    auto values = base_placeholder_values(doc_with_entities, config);
    values["examples"] = options.examples_block;
    std::string candidate_lines;
    for (const auto& c : candidates) {
      candidate_lines += tuple_text(c.subject_id, c.object_id, catalog) + "\n";
    }
    values["candidate_pairs"] = trim(candidate_lines);

    // Step 1: pair prediction against the pair requirements.
    values["guideline_excerpt"] =
        chunk_bodies(store.chunks_of_kind(ChunkKind::kRelationPairRequirements, pair));
    CallResult step1 = workflow_call(*templates.re_pair_prediction, values, gateway, options);
    result.step1_calls++;
    result.prompt_tokens += step1.prompt_tokens;
    result.completion_tokens += step1.completion_tokens;
    for (auto& r : step1.responses) result.raw_responses.push_back(std::move(r));

    ParsedAnnotation parsed1 = parse_re(step1.final_text, std::nullopt, catalog);
    for (auto& w : parsed1.warnings) annotation.warnings.push_back(w);
    std::vector<RelationRecord> survivors;
    for (auto& r : parsed1.relations) {
      if (pair_in(candidates, r)) {
        r.relation_type = std::nullopt;
        if (!pair_in(survivors, r)) survivors.push_back(std::move(r));
      } else {
        annotation.warnings.push_back("re workflow: predicted pair outside candidate set: (" +
                                      r.subject_id + ", " + r.object_id + ")");
      }
    }
    if (survivors.empty()) continue;

    // Step 2: type classification (typed datasets only).
    std::vector<RelationRecord> typed_records;
    if (config.typed_relations()) {
      if (!templates.re_type_classification) {
        throw Error("run_re_workflow: typed dataset needs a type-classification template");
      }
      values["guideline_excerpt"] =
          chunk_bodies(store.chunks_of_kind(ChunkKind::kRelationTypeRequirements, pair));
      values["records"] = trim(records_text(survivors, catalog));
      CallResult step2 =
          workflow_call(*templates.re_type_classification, values, gateway, options);
      result.step2_calls++;
      result.prompt_tokens += step2.prompt_tokens;
      result.completion_tokens += step2.completion_tokens;
      for (auto& r : step2.responses) result.raw_responses.push_back(std::move(r));

      ParsedAnnotation parsed2 = parse_re(step2.final_text, type_vocab, catalog);
      for (auto& w : parsed2.warnings) annotation.warnings.push_back(w);
      for (auto& r : parsed2.relations) {
        if (!r.relation_type) continue;
        if (pair_in(survivors, r)) {
          typed_records.push_back(std::move(r));
        } else {
          annotation.warnings.push_back("re workflow: typed pair not among step-1 survivors: (" +
                                        r.subject_id + ", " + r.object_id + ")");
        }
      }
    } else {
      typed_records = survivors;
    }
    if (typed_records.empty()) continue;

    // Step 3: rule validation; may confirm, drop, or retype, never add.
    values["guideline_excerpt"] =
        chunk_bodies(store.chunks_of_kind(ChunkKind::kOtherRules, pair));
    values["records"] = trim(records_text(typed_records, catalog));
    std::vector<RelationRecord> validated;
    try {
      CallResult step3 = workflow_call(*templates.re_rule_validation, values, gateway, options);
      result.step3_calls++;
      result.prompt_tokens += step3.prompt_tokens;
      result.completion_tokens += step3.completion_tokens;
      for (auto& r : step3.responses) result.raw_responses.push_back(std::move(r));

      auto verdicts =
          parse_re_validation(step3.final_text, type_vocab, catalog, &annotation.warnings);
      for (auto& v : verdicts) {
        if (!pair_in(typed_records, v.record)) {
          annotation.warnings.push_back("re workflow: validation introduced unknown pair (" +
                                        v.record.subject_id + ", " + v.record.object_id +
                                        "); dropped");
          continue;
        }
        if (v.verb == ValidationVerb::kDrop) continue;
        if (!v.record.relation_type && config.typed_relations()) {
          // keep the step-2 type when the validator omitted it
          for (const auto& t : typed_records) {
            if (t.same_pair(v.record)) {
              v.record.relation_type = t.relation_type;
              break;
            }
          }
        }
        if (!pair_in(validated, v.record)) validated.push_back(std::move(v.record));
      }
    } catch (const Error& e) {
      annotation.warnings.push_back(std::string("re workflow: rule validation failed (") +
                                    e.what() + "); keeping previous step output");
      validated = typed_records;
    }
    for (auto& r : validated) final_records.push_back(std::move(r));
  }

  // Cross-pair dedup on (unordered pair, type).
  for (auto& r : final_records) {
    bool dup = std::any_of(annotation.relations.begin(), annotation.relations.end(),
                           [&](const RelationRecord& x) {
                             return x.same_pair(r) && x.relation_type == r.relation_type;
                           });
    if (!dup) annotation.relations.push_back(std::move(r));
  }
  return result;
}

WorkflowResult run_ner_workflow(const Document& doc, const GuidelineStore& store, Gateway& gateway,
                                const WorkflowTemplates& templates, const TaskConfig& config,
                                const WorkflowOptions& options) {
  if (!templates.ner_preliminary || !templates.ner_validation) {
    throw Error("run_ner_workflow: preliminary and validation templates required");
  }
  auto summary = store.chunks_of_kind(ChunkKind::kNerSummary, std::nullopt);
  auto full_rules = store.chunks_of_kind(ChunkKind::kNerFullRules, std::nullopt);
  if (summary.empty() || full_rules.empty()) {
    throw Error("run_ner_workflow: store " + store.dataset_id() +
                " needs ner-summary and ner-full-rules chunks");
  }
  std::set<std::string> allowed(config.entity_types.begin(), config.entity_types.end());

  WorkflowResult result;
  AnnotatedDoc bare;
  bare.doc = doc;
  auto values = base_placeholder_values(bare, config);
  values["examples"] = options.examples_block;
  values["guideline_excerpt"] = chunk_bodies(summary);

  CallResult phase1 = workflow_call(*templates.ner_preliminary, values, gateway, options);
  result.step1_calls++;
  result.prompt_tokens += phase1.prompt_tokens;
  result.completion_tokens += phase1.completion_tokens;
  for (auto& r : phase1.responses) result.raw_responses.push_back(std::move(r));

  ParsedAnnotation preliminary = parse_ner(doc, phase1.final_text, allowed);

  values["guideline_excerpt"] = chunk_bodies(full_rules);
  values["preliminary"] = render_ner(doc, preliminary.mentions);
  try {
    CallResult phase2 = workflow_call(*templates.ner_validation, values, gateway, options);
    result.step2_calls++;
    result.prompt_tokens += phase2.prompt_tokens;
    result.completion_tokens += phase2.completion_tokens;
    for (auto& r : phase2.responses) result.raw_responses.push_back(std::move(r));

    result.annotation = parse_ner(doc, phase2.final_text, allowed);
    for (const auto& w : preliminary.warnings) result.annotation.warnings.push_back(w);
  } catch (const Error& e) {
    result.annotation = std::move(preliminary);
    result.annotation.warnings.push_back(std::string("ner workflow: validation failed (") +
                                         e.what() + "); keeping preliminary annotation");
  }
  return result;
}

WorkflowResult inline_guideline(const Document& doc, const std::vector<Mention>& entities,
                                const GuidelineStore& store, Gateway& gateway,
                                const WorkflowTemplates& templates, const TaskConfig& config,
                                const WorkflowOptions& options) {
  if (!templates.inline_single) throw Error("inline_guideline: template required");
  if (trim(doc.full_text()).empty()) {
    throw Error("inline_guideline: empty document text");
  }
  if (store.total_body_length() > options.inline_threshold) {
    throw Error("inline_guideline: guideline body of " +
                std::to_string(store.total_body_length()) + " bytes exceeds threshold " +
                std::to_string(options.inline_threshold) + "; use the chunked workflow");
  }

  WorkflowResult result;
  std::vector<const GuidelineChunk*> all;
  for (const auto& c : store.chunks()) all.push_back(&c);
  EntityCatalog catalog = EntityCatalog::from_mentions(entities);

  AnnotatedDoc doc_with_entities;
  doc_with_entities.doc = doc;
  doc_with_entities.mentions = entities;
  auto values = base_placeholder_values(doc_with_entities, config);
  values["examples"] = options.examples_block;
  values["guideline_excerpt"] = chunk_bodies(all);

  CallResult call = workflow_call(*templates.inline_single, values, gateway, options);
  result.step1_calls++;
  result.prompt_tokens += call.prompt_tokens;
  result.completion_tokens += call.completion_tokens;
  for (auto& r : call.responses) result.raw_responses.push_back(std::move(r));

  const auto contract = templates.inline_single->output_contract;
  switch (contract) {
    case OutputContract::kTaggedText: {
      std::set<std::string> allowed(config.entity_types.begin(), config.entity_types.end());
      result.annotation = parse_ner(doc, call.final_text, allowed);
      break;
    }
    case OutputContract::kTuples:
      result.annotation = parse_re(call.final_text, std::nullopt, catalog);
      break;
    case OutputContract::kTriples:
      result.annotation = parse_re(call.final_text, config.relation_types, catalog);
      break;
    case OutputContract::kJsonLabels:
      result.annotation = parse_labels(call.final_text, config.label_vocabulary);
      break;
  }
  return result;
}

}  // namespace biomine
