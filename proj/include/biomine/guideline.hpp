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
#include "biomine/gateway.hpp"
#include "biomine/parse.hpp"
#include "biomine/prompt.hpp"

namespace biomine {

enum class ChunkKind {
  kRelationPairRequirements,
  kRelationTypeRequirements,
  kNerSummary,
  kNerFullRules,
  kOtherRules,
};

const char* chunk_kind_name(ChunkKind k);
std::optional<ChunkKind> chunk_kind_from_string(const std::string& s);

// Unordered pair of entity types, stored sorted.
using TypePair = std::pair<std::string, std::string>;
TypePair make_type_pair(const std::string& a, const std::string& b);

struct GuidelineChunk {
  std::string chunk_id;
  ChunkKind kind = ChunkKind::kOtherRules;
  std::optional<TypePair> entity_type_key;
  std::vector<std::string> relevant_types;  // other-rules relevance filter
  bool not_annotated = false;               // marker: pair is never annotated
  std::string body;
};

// Annotation guideline reorganized as one text file per chunk, with
// key-value front-matter, plus a pairs.conf mapping entity-type pairs to
// annotate/skip.
class GuidelineStore {
 public:
  static GuidelineStore load(const std::string& dir);

  const std::string& dataset_id() const { return dataset_id_; }
  const std::vector<GuidelineChunk>& chunks() const { return chunks_; }
  std::size_t total_body_length() const;

  // annotate=true pairs; skip pairs resolve to a marker.
  const std::map<TypePair, bool>& configured_pairs() const { return pair_policy_; }
  std::optional<bool> pair_policy(const TypePair& pair) const;

  std::vector<const GuidelineChunk*> chunks_of_kind(ChunkKind kind,
                                                    const std::optional<TypePair>& pair) const;

  // Validates the store invariant: every annotate-pair has at least one
  // pair-requirements chunk; every skip-pair has a marker or a skip entry.
  void check(bool relations_expected) const;

 private:
  std::string dataset_id_;
  std::vector<GuidelineChunk> chunks_;
  std::map<TypePair, bool> pair_policy_;
};

// Exact-key lookup by (kind, unordered pair) plus every other-rules chunk
// relevant to either entity type; deterministic order by chunk_id. Errors
// when a configured annotate-pair resolves to nothing.
std::vector<const GuidelineChunk*> select_chunks(const GuidelineStore& store, ChunkKind kind,
                                                 const std::optional<TypePair>& pair);

struct WorkflowTemplates {
  std::optional<PromptTemplate> re_pair_prediction;
  std::optional<PromptTemplate> re_type_classification;
  std::optional<PromptTemplate> re_rule_validation;
  std::optional<PromptTemplate> ner_preliminary;
  std::optional<PromptTemplate> ner_validation;
  std::optional<PromptTemplate> inline_single;
};

struct WorkflowOptions {
  PlanOptions plan;
  bool two_step = false;          // reasoning + structurize per workflow call
  std::string examples_block;     // optional few-shot block for first calls
  std::size_t inline_threshold = 2500;  // bytes of guideline body
};

struct WorkflowResult {
  ParsedAnnotation annotation;
  int step1_calls = 0;  // pair prediction / preliminary annotation
  int step2_calls = 0;  // type classification / rule validation
  int step3_calls = 0;  // rule validation (RE only)
  std::vector<std::string> raw_responses;
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
};

// Three-phase guideline RE: pair prediction over all candidate pairs of each
// present type pair, type classification for survivors (multi-type datasets
// only), then rule validation which may confirm, drop, or retype records but
// never invent new ones.
WorkflowResult run_re_workflow(const Document& doc, const std::vector<Mention>& entities,
                               const GuidelineStore& store, Gateway& gateway,
                               const WorkflowTemplates& templates, const TaskConfig& config,
                               const WorkflowOptions& options);

// Two-phase guideline NER: preliminary annotation from the summarized rules,
// then revision against the full rules.
WorkflowResult run_ner_workflow(const Document& doc, const GuidelineStore& store, Gateway& gateway,
                                const WorkflowTemplates& templates, const TaskConfig& config,
                                const WorkflowOptions& options);

// Whole-guideline inlining for short guidelines; errors when the store
// exceeds the threshold.
WorkflowResult inline_guideline(const Document& doc, const std::vector<Mention>& entities,
                                const GuidelineStore& store, Gateway& gateway,
                                const WorkflowTemplates& templates, const TaskConfig& config,
                                const WorkflowOptions& options);

}  // namespace biomine
