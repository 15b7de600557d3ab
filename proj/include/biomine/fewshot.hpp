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

namespace biomine {

struct IndexedExample {
  std::string doc_id;
  std::vector<float> vector;        // unit length
  std::string input_text;           // what the model sees for this example
  std::string rendered_target;      // gold annotation in the task's output format
};

struct VectorIndex {
  std::vector<IndexedExample> examples;
  std::size_t dimension = 0;

  std::size_t size() const { return examples.size(); }
};

// Optional on-disk cache of document embeddings keyed by (doc_id, model), so
// repeated runs do not re-embed a training split.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::string path);
  std::optional<std::vector<float>> get(const std::string& doc_id, const std::string& model) const;
  void put(const std::string& doc_id, const std::string& model, const std::vector<float>& v);

 private:
  std::string path_;
  std::map<std::pair<std::string, std::string>, std::vector<float>> entries_;
};

struct IndexBuildConfig {
  Task task = Task::kNer;
  std::vector<std::string> label_vocabulary;  // required for Task::kLabels
  std::string embed_model;
};

// Gold annotation rendered in the task's output format.
std::string render_gold_target(const AnnotatedDoc& ad, Task task,
                               const std::vector<std::string>& label_vocabulary);

// Embeds every document's full text and renders its gold annotation with the
// task's output renderer. Rendered targets parse back to the gold they came
// from; the round-trip tests pin that.
VectorIndex build_index(const DatasetSplit& split, const IndexBuildConfig& config,
                        Gateway& gateway, EmbeddingCache* cache = nullptr);

// Exhaustive cosine-similarity scan (vectors are unit length, so a dot
// product). Descending similarity, ties broken by ascending doc_id; at most
// min(k, size) results. Documents in `exclude` never appear.
std::vector<IndexedExample> nearest(const VectorIndex& index, const std::vector<float>& query,
                                    std::size_t k,
                                    const std::set<std::string>& exclude = {});

}  // namespace biomine
