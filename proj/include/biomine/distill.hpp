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

#include <cstdint>
#include <string>
#include <vector>

#include "biomine/annotate.hpp"
#include "biomine/corpus.hpp"

namespace biomine {

struct Provenance {
  std::string config_hash;
  std::string model_id;
  std::string timestamp;  // ISO-8601, informational only
};

struct SyntheticRecord {
  AnnotatedDoc doc;  // model-produced annotations attached to the document
  int64_t parse_warnings = 0;
  Provenance provenance;
};

struct DistillStats {
  int64_t annotated = 0;
  int64_t dropped_no_positive = 0;
  int64_t skipped_errors = 0;
  int64_t positives = 0;
  int64_t negatives = 0;
};

// Annotates documents until `target_size` records with at least one positive
// label are collected (or the input runs out); zero-label records are
// dropped and counted.
std::vector<SyntheticRecord> build_classification_corpus(const std::vector<Document>& docs,
                                                         Annotator& annotator,
                                                         std::size_t target_size,
                                                         const Provenance& provenance,
                                                         DistillStats* stats = nullptr);

// NER then RE per document; negatives are sampled per document from
// entity-type cross pairs absent from the positives, round(ratio*positives)
// of them, capped by availability, flagged relation_type NONE.
std::vector<SyntheticRecord> build_re_corpus(const std::vector<Document>& docs,
                                             Annotator& ner_annotator, Annotator& re_annotator,
                                             double negative_ratio, uint64_t seed,
                                             const Provenance& provenance,
                                             DistillStats* stats = nullptr);

// Deterministic doc_id order; output loads back through the corpus readers.
void export_training_set(const std::vector<SyntheticRecord>& records, SplitFormat format,
                         const std::string& path);

// Sidecar metadata written next to an exported corpus.
void write_provenance(const std::vector<SyntheticRecord>& records, const DistillStats& stats,
                      const std::string& path);

}  // namespace biomine
