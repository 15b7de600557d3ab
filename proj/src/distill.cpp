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

#include "biomine/distill.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace biomine {

namespace {

SyntheticRecord make_record(const Document& doc, const ParsedAnnotation& annotation,
                            const Provenance& provenance) {
  SyntheticRecord rec;
  rec.doc = to_annotated_doc(doc, annotation);
  rec.parse_warnings = static_cast<int64_t>(annotation.warnings.size());
  rec.provenance = provenance;
  return rec;
}

}  // namespace

std::vector<SyntheticRecord> build_classification_corpus(const std::vector<Document>& docs,
                                                         Annotator& annotator,
                                                         std::size_t target_size,
                                                         const Provenance& provenance,
                                                         DistillStats* stats) {
  DistillStats local;
  DistillStats& st = stats ? *stats : local;
  std::vector<SyntheticRecord> corpus;
  for (const auto& doc : docs) {
    if (corpus.size() >= target_size) break;
    AnnotatedDoc input;
    input.doc = doc;
    PredictionRecord pred;
    try {
      pred = annotator.annotate(input);
    } catch (const Error&) {
      st.skipped_errors++;
      continue;
    }
    st.annotated++;
    if (pred.annotation.labels.empty()) {
      st.dropped_no_positive++;
      continue;
    }
    corpus.push_back(make_record(doc, pred.annotation, provenance));
  }
  return corpus;
}

std::vector<SyntheticRecord> build_re_corpus(const std::vector<Document>& docs,
                                             Annotator& ner_annotator, Annotator& re_annotator,
                                             double negative_ratio, uint64_t seed,
                                             const Provenance& provenance, DistillStats* stats) {
  if (negative_ratio < 0.0) throw Error("build_re_corpus: negative_ratio must be >= 0");
  DistillStats local;
  DistillStats& st = stats ? *stats : local;
  const auto& entity_types = re_annotator.task().entity_types;
  if (entity_types.size() != 2) {
    throw Error("build_re_corpus: relation task config must name exactly two entity types");
  }

  std::vector<SyntheticRecord> corpus;
  for (const auto& doc : docs) {
    AnnotatedDoc input;
    input.doc = doc;
    PredictionRecord ner_pred, re_pred;
    try {
      ner_pred = ner_annotator.annotate(input);
      input.mentions = ner_pred.annotation.mentions;
      re_pred = re_annotator.annotate(input);
    } catch (const Error&) {
      st.skipped_errors++;
      continue;
    }
    st.annotated++;

    ParsedAnnotation combined;
    combined.mentions = ner_pred.annotation.mentions;
    combined.relations = re_pred.annotation.relations;
    for (const auto& w : ner_pred.annotation.warnings) combined.warnings.push_back(w);
    for (const auto& w : re_pred.annotation.warnings) combined.warnings.push_back(w);

    // Positive pairs at the concept level, unordered.
    std::set<std::pair<std::string, std::string>> positive_pairs;
    for (const auto& r : combined.relations) {
      positive_pairs.insert(
          {std::min(r.subject_id, r.object_id), std::max(r.subject_id, r.object_id)});
    }
    const int64_t positives = static_cast<int64_t>(positive_pairs.size());
    st.positives += positives;

    // Candidate negatives: cross pairs of the two configured entity types
    // that are not positives.
    auto concept_ids = [&](const std::string& type) {
      std::vector<std::string> out;
      std::set<std::string> seen;
      for (const auto& m : combined.mentions) {
        if (m.entity_type != type) continue;
        std::string id = m.concept_id.empty() ? m.surface : m.concept_id;
        if (seen.insert(id).second) out.push_back(id);
      }
      return out;
    };
    std::vector<std::pair<std::string, std::string>> negative_pool;
    for (const auto& a : concept_ids(entity_types[0])) {
      for (const auto& b : concept_ids(entity_types[1])) {
        if (a == b) continue;
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        if (positive_pairs.count(key)) continue;
        negative_pool.push_back({a, b});
      }
    }
    std::sort(negative_pool.begin(), negative_pool.end());
    negative_pool.erase(std::unique(negative_pool.begin(), negative_pool.end()),
                        negative_pool.end());

    const int64_t want =
        static_cast<int64_t>(std::llround(negative_ratio * static_cast<double>(positives)));
    const int64_t take = std::min<int64_t>(want, static_cast<int64_t>(negative_pool.size()));

    // Per-document deterministic sampling.
    std::mt19937_64 rng(seed ^ fnv1a64(doc.doc_id));
    for (int64_t i = 0; i < take; ++i) {
      size_t j = static_cast<size_t>(i) +
                 static_cast<size_t>(rng() % (negative_pool.size() - static_cast<size_t>(i)));
      std::swap(negative_pool[static_cast<size_t>(i)], negative_pool[j]);
      RelationRecord neg;
      neg.subject_id = negative_pool[static_cast<size_t>(i)].first;
      neg.object_id = negative_pool[static_cast<size_t>(i)].second;
      neg.relation_type = "NONE";
      combined.relations.push_back(std::move(neg));
    }
    st.negatives += take;

    corpus.push_back(make_record(doc, combined, provenance));
  }
  return corpus;
}

void export_training_set(const std::vector<SyntheticRecord>& records, SplitFormat format,
                         const std::string& path) {
  DatasetSplit split;
  split.name = path;
  for (const auto& r : records) split.docs.push_back(r.doc);
  std::sort(split.docs.begin(), split.docs.end(),
            [](const AnnotatedDoc& a, const AnnotatedDoc& b) { return a.doc.doc_id < b.doc.doc_id; });
  // Untyped positives need a type token for the pubtator relation rows.
  if (format == SplitFormat::kPubtator) {
    for (auto& d : split.docs) {
      for (auto& r : d.relations) {
        if (!r.relation_type) r.relation_type = "CID";
      }
    }
  }
  write_split(split, path, format);
}

void write_provenance(const std::vector<SyntheticRecord>& records, const DistillStats& stats,
                      const std::string& path) {
  nlohmann::ordered_json j;
  j["records"] = records.size();
  if (!records.empty()) {
    j["config_hash"] = records.front().provenance.config_hash;
    j["model_id"] = records.front().provenance.model_id;
    j["timestamp"] = records.front().provenance.timestamp;
  }
  j["annotated"] = stats.annotated;
  j["dropped_no_positive"] = stats.dropped_no_positive;
  j["skipped_errors"] = stats.skipped_errors;
  j["positives"] = stats.positives;
  j["negatives"] = stats.negatives;
  int64_t warnings = 0;
  for (const auto& r : records) warnings += r.parse_warnings;
  j["parse_warnings"] = warnings;
  write_file(path, j.dump(2) + "\n");
}

}  // namespace biomine
