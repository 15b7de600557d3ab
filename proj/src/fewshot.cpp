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

#include "biomine/fewshot.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "biomine/parse.hpp"
#include "biomine/simd.hpp"

namespace biomine {

namespace {
using nlohmann::json;
using nlohmann::ordered_json;
}  // namespace

EmbeddingCache::EmbeddingCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) throw Error(path_ + ": bad embedding cache line");
    entries_[{rec.at("doc_id").get<std::string>(), rec.at("model").get<std::string>()}] =
        rec.at("vector").get<std::vector<float>>();
  }
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& doc_id,
                                                      const std::string& model) const {
  auto it = entries_.find({doc_id, model});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& doc_id, const std::string& model,
                         const std::vector<float>& v) {
  if (!entries_.emplace(std::make_pair(doc_id, model), v).second) return;
  ordered_json rec;
  rec["doc_id"] = doc_id;
  rec["model"] = model;
  rec["vector"] = v;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("embedding cache: cannot append to " + path_);
  out << rec.dump() << "\n";
}

std::string render_gold_target(const AnnotatedDoc& ad, Task task,
                               const std::vector<std::string>& label_vocabulary) {
  switch (task) {
    case Task::kNer:
      return render_ner(ad.doc, ad.mentions);
    case Task::kRe:
      return render_re(ad.relations, EntityCatalog::from_mentions(ad.mentions));
    case Task::kLabels:
      return render_labels(ad.labels, label_vocabulary);
  }
  throw Error("render_gold_target: bad task");
}

VectorIndex build_index(const DatasetSplit& split, const IndexBuildConfig& config,
                        Gateway& gateway, EmbeddingCache* cache) {
  VectorIndex index;
  if (split.docs.empty()) return index;
  if (config.task == Task::kLabels && config.label_vocabulary.empty()) {
    throw Error("build_index: label task requires a vocabulary");
  }

  std::vector<std::string> to_embed;
  std::vector<size_t> to_embed_pos;
  index.examples.resize(split.docs.size());
  for (size_t i = 0; i < split.docs.size(); ++i) {
    const auto& ad = split.docs[i];
    auto& ex = index.examples[i];
    ex.doc_id = ad.doc.doc_id;
    ex.input_text = ad.doc.full_text();
    ex.rendered_target = render_gold_target(ad, config.task, config.label_vocabulary);
    if (cache) {
      if (auto hit = cache->get(ex.doc_id, config.embed_model)) {
        ex.vector = std::move(*hit);
        continue;
      }
    }
    to_embed.push_back(ex.input_text);
    to_embed_pos.push_back(i);
  }

  if (!to_embed.empty()) {
    auto vectors = gateway.embed(to_embed, config.embed_model);
    for (size_t k = 0; k < to_embed_pos.size(); ++k) {
      auto& ex = index.examples[to_embed_pos[k]];
      ex.vector = std::move(vectors[k]);
      if (cache) cache->put(ex.doc_id, config.embed_model, ex.vector);
    }
  }

  index.dimension = index.examples.front().vector.size();
  std::set<std::string> ids;
  for (const auto& ex : index.examples) {
    if (ex.vector.size() != index.dimension) {
      throw Error("build_index: inconsistent embedding dimension for doc " + ex.doc_id);
    }
    if (!ids.insert(ex.doc_id).second) {
      throw Error("build_index: duplicate doc_id " + ex.doc_id);
    }
  }
  return index;
}

std::vector<IndexedExample> nearest(const VectorIndex& index, const std::vector<float>& query,
                                    std::size_t k, const std::set<std::string>& exclude) {
  if (index.examples.empty() || k == 0) return {};
  if (query.size() != index.dimension) {
    throw Error("nearest: query dimension " + std::to_string(query.size()) +
                " does not match index dimension " + std::to_string(index.dimension));
  }
  struct Scored {
    float similarity;
    const IndexedExample* example;
  };
  std::vector<Scored> scored;
  scored.reserve(index.examples.size());
  for (const auto& ex : index.examples) {
    if (exclude.count(ex.doc_id)) continue;
    scored.push_back({simd::dot(query.data(), ex.vector.data(), query.size()), &ex});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.example->doc_id < b.example->doc_id;
  });
  const std::size_t take = std::min(k, scored.size());
  std::vector<IndexedExample> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(*scored[i].example);
  return out;
}

}  // namespace biomine
