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

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace biomine {

// One corpus unit: a title+abstract record. full_text is the single
// coordinate system every downstream offset refers to.
struct Document {
  std::string doc_id;
  std::string title;
  std::string abstract_text;

  std::string full_text() const {
    return abstract_text.empty() ? title : title + " " + abstract_text;
  }
};

// A typed entity span anchored to character offsets in Document::full_text.
struct Mention {
  std::string entity_type;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::string surface;
  std::string concept_id;  // empty when the corpus carries none

  friend bool operator==(const Mention&, const Mention&) = default;
  friend auto operator<=>(const Mention&, const Mention&) = default;
};

// A typed pair of entity concept identifiers. relation_type is empty for
// single-type tasks (CDI tuples); otherwise one of the dataset vocabulary.
struct RelationRecord {
  std::string subject_id;
  std::string object_id;
  std::optional<std::string> relation_type;

  // Unordered pair identity: (a,b) == (b,a).
  bool same_pair(const RelationRecord& other) const {
    return (subject_id == other.subject_id && object_id == other.object_id) ||
           (subject_id == other.object_id && object_id == other.subject_id);
  }

  friend bool operator==(const RelationRecord&, const RelationRecord&) = default;
  friend auto operator<=>(const RelationRecord&, const RelationRecord&) = default;
};

using LabelSet = std::set<std::string>;

struct AnnotatedDoc {
  Document doc;
  std::vector<Mention> mentions;
  std::vector<RelationRecord> relations;
  LabelSet labels;

  friend bool operator==(const AnnotatedDoc& a, const AnnotatedDoc& b) {
    return a.doc.doc_id == b.doc.doc_id && a.doc.title == b.doc.title &&
           a.doc.abstract_text == b.doc.abstract_text && a.mentions == b.mentions &&
           a.relations == b.relations && a.labels == b.labels;
  }
};

enum class Task { kNer, kRe, kLabels };

struct DatasetSplit {
  std::string name;  // train, valid, test
  std::vector<AnnotatedDoc> docs;

  std::size_t size() const { return docs.size(); }
  const AnnotatedDoc* find(const std::string& doc_id) const;

  friend bool operator==(const DatasetSplit& a, const DatasetSplit& b) {
    return a.docs == b.docs;
  }
};

enum class SplitFormat { kPubtator, kJsonLines };

// PubTator text format: `id|t|title`, `id|a|abstract`, tab-separated
// annotation rows, blank line between records. Mention rows have integer
// offsets in columns 2-3; relation rows have a type token there instead.
DatasetSplit load_pubtator(const std::string& path, Task task);
DatasetSplit parse_pubtator(const std::string& content, Task task, const std::string& origin);

// JSON-lines label corpora: {doc_id, text | title+abstract, labels[]}.
// Labels outside the vocabulary are rejected.
DatasetSplit load_label_corpus(const std::string& path, const std::vector<std::string>& vocabulary);

DatasetSplit load_json_lines(const std::string& path);

void write_split(const DatasetSplit& split, const std::string& path, SplitFormat format);
std::string render_split(const DatasetSplit& split, SplitFormat format);

// Re-checks every invariant the loaders enforce (offset/surface agreement,
// unique ids, relation pair uniqueness). Throws on the first violation.
void validate_split(const DatasetSplit& split);

}  // namespace biomine
