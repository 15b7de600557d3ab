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

namespace biomine {

enum class AlignmentQuality { kExact, kRepaired, kDegraded };

const char* alignment_quality_name(AlignmentQuality q);

// What a model response parses to. Parsers never throw on model output:
// anything unusable degrades to an empty result plus warnings.
struct ParsedAnnotation {
  std::vector<Mention> mentions;
  std::vector<RelationRecord> relations;
  LabelSet labels;
  std::vector<std::string> warnings;
  AlignmentQuality alignment_quality = AlignmentQuality::kExact;
};

// --- Inline tag scheme for NER ------------------------------------------
//
// Entities are marked as  <Type = "Disease">scleroderma</Type>  inside an
// otherwise verbatim copy of the document text. Literal markup characters
// in the text are entity-escaped on render and restored on parse.

std::string render_ner(const Document& doc, std::vector<Mention> mentions,
                       std::vector<std::string>* warnings = nullptr);

// Tag stripping + entity unescape; inverse of render_ner's text transform.
std::string detag(const std::string& tagged);

ParsedAnnotation parse_ner(const Document& doc, const std::string& tagged,
                           const std::set<std::string>& allowed_types);

// --- Tuple / triple scheme for RE ---------------------------------------

// Normalized-surface -> concept id lookups for grounding parsed names.
class EntityCatalog {
 public:
  void add(const std::string& surface, const std::string& concept_id);
  std::optional<std::string> lookup(const std::string& surface) const;
  const std::string* surface_of(const std::string& concept_id) const;
  static EntityCatalog from_mentions(const std::vector<Mention>& mentions);

 private:
  std::map<std::string, std::string> id_by_key_;
  std::map<std::string, std::string> surface_by_id_;
};

std::string render_re(const std::vector<RelationRecord>& relations, const EntityCatalog& entities);

ParsedAnnotation parse_re(const std::string& text,
                          const std::optional<std::vector<std::string>>& relation_types,
                          const EntityCatalog& entities);

// Rule-validation verdicts emitted by the guideline workflow's final step:
// lines of the form  KEEP (a, b[, type]) / DROP (...) / RETYPE (a, b, type).
enum class ValidationVerb { kKeep, kDrop, kRetype };

struct ValidatedRelation {
  ValidationVerb verb;
  RelationRecord record;
};

std::vector<ValidatedRelation> parse_re_validation(
    const std::string& text, const std::optional<std::vector<std::string>>& relation_types,
    const EntityCatalog& entities, std::vector<std::string>* warnings);

// --- JSON scheme for multi-label classification --------------------------

std::string render_labels(const LabelSet& labels, const std::vector<std::string>& vocabulary);

ParsedAnnotation parse_labels(const std::string& text, const std::vector<std::string>& vocabulary);

}  // namespace biomine
