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

#include "biomine/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "biomine/common.hpp"

namespace biomine {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool is_uint(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

void check_mention(const AnnotatedDoc& ad, const Mention& m, const std::string& origin) {
  const std::string text = ad.doc.full_text();
  if (m.start >= m.end || m.end > text.size()) {
    throw Error(origin + ": doc " + ad.doc.doc_id + ": mention offsets [" +
                std::to_string(m.start) + "," + std::to_string(m.end) +
                ") out of range for text of length " + std::to_string(text.size()));
  }
  if (text.compare(m.start, m.end - m.start, m.surface) != 0) {
    throw Error(origin + ": doc " + ad.doc.doc_id + ": surface mismatch at [" +
                std::to_string(m.start) + "," + std::to_string(m.end) + "): text has \"" +
                text.substr(m.start, m.end - m.start) + "\" but annotation says \"" +
                m.surface + "\"");
  }
}

void check_relations(const AnnotatedDoc& ad, const std::string& origin) {
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : ad.relations) {
    if (r.subject_id == r.object_id) {
      throw Error(origin + ": doc " + ad.doc.doc_id + ": self-relation on " + r.subject_id);
    }
    auto lo = std::min(r.subject_id, r.object_id);
    auto hi = std::max(r.subject_id, r.object_id);
    auto key = std::make_tuple(lo, hi, r.relation_type.value_or(""));
    if (!seen.insert(key).second) {
      throw Error(origin + ": doc " + ad.doc.doc_id + ": duplicate relation (" + lo + ", " +
                  hi + ")");
    }
  }
}

}  // namespace

const AnnotatedDoc* DatasetSplit::find(const std::string& doc_id) const {
  for (const auto& d : docs) {
    if (d.doc.doc_id == doc_id) return &d;
  }
  return nullptr;
}

void validate_split(const DatasetSplit& split) {
  std::unordered_set<std::string> ids;
  for (const auto& ad : split.docs) {
    if (ad.doc.doc_id.empty()) throw Error("split: empty doc_id");
    if (!ids.insert(ad.doc.doc_id).second) {
      throw Error("split: duplicate doc_id " + ad.doc.doc_id);
    }
    for (const auto& m : ad.mentions) check_mention(ad, m, "split");
    check_relations(ad, "split");
  }
}

DatasetSplit parse_pubtator(const std::string& content, Task task, const std::string& origin) {
  DatasetSplit result;
  AnnotatedDoc current;
  bool open = false;
  size_t line_no = 0;

  auto flush = [&] {
    if (!open) return;
    for (const auto& m : current.mentions) check_mention(current, m, origin);
    check_relations(current, origin);
    result.docs.push_back(std::move(current));
    current = AnnotatedDoc{};
    open = false;
  };

  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    auto where = [&] { return origin + ": line " + std::to_string(line_no); };

    // `id|t|...` / `id|a|...` header lines.
    size_t p1 = line.find('|');
    size_t p2 = (p1 == std::string::npos) ? std::string::npos : line.find('|', p1 + 1);
    if (p2 != std::string::npos && p2 == p1 + 2 &&
        (line[p1 + 1] == 't' || line[p1 + 1] == 'a') && line.find('\t') == std::string::npos) {
      std::string id = line.substr(0, p1);
      std::string body = line.substr(p2 + 1);
      if (id.empty()) throw Error(where() + ": empty doc id");
      if (line[p1 + 1] == 't') {
        flush();
        current.doc.doc_id = id;
        current.doc.title = body;
        open = true;
      } else {
        if (!open || current.doc.doc_id != id) {
          throw Error(where() + ": abstract line for " + id + " without matching title line");
        }
        current.doc.abstract_text = body;
      }
      continue;
    }

    // Tab-separated annotation rows.
    if (!open) throw Error(where() + ": annotation row outside any document block");
    auto fields = split(line, '\t');
    if (fields.size() < 4) throw Error(where() + ": malformed annotation row");
    if (fields[0] != current.doc.doc_id) {
      throw Error(where() + ": annotation doc id " + fields[0] + " does not match block " +
                  current.doc.doc_id);
    }
    if (is_uint(fields[1]) && is_uint(fields[2])) {
      if (fields.size() < 5) throw Error(where() + ": mention row needs type column");
      Mention m;
      m.start = std::stoull(fields[1]);
      m.end = std::stoull(fields[2]);
      m.surface = fields[3];
      m.entity_type = fields[4];
      if (fields.size() > 5 && fields[5] != "-") m.concept_id = fields[5];
      current.mentions.push_back(std::move(m));
    } else {
      if (task != Task::kRe) continue;  // NER loads skip relation rows
      RelationRecord r;
      r.relation_type = fields[1];
      r.subject_id = fields[2];
      r.object_id = fields[3];
      current.relations.push_back(std::move(r));
    }
  }
  flush();
  result.name = origin;
  return result;
}

DatasetSplit load_pubtator(const std::string& path, Task task) {
  return parse_pubtator(read_file(path), task, path);
}

DatasetSplit load_label_corpus(const std::string& path, const std::vector<std::string>& vocabulary) {
  std::set<std::string> vocab(vocabulary.begin(), vocabulary.end());
  DatasetSplit split;
  split.name = path;
  std::istringstream in(read_file(path));
  std::string line;
  size_t line_no = 0;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path + ": line " + std::to_string(line_no) + ": bad JSON: " + e.what());
    }
    AnnotatedDoc ad;
    if (!rec.contains("doc_id")) {
      throw Error(path + ": line " + std::to_string(line_no) + ": missing doc_id");
    }
    ad.doc.doc_id = rec["doc_id"].get<std::string>();
    if (rec.contains("title")) ad.doc.title = rec["title"].get<std::string>();
    if (rec.contains("abstract")) ad.doc.abstract_text = rec["abstract"].get<std::string>();
    if (ad.doc.title.empty() && rec.contains("text")) {
      ad.doc.title = rec["text"].get<std::string>();
    }
    if (!rec.contains("labels")) {
      throw Error(path + ": doc " + ad.doc.doc_id + ": missing labels");
    }
    for (const auto& l : rec["labels"]) {
      std::string label = l.get<std::string>();
      if (!vocab.count(label)) {
        throw Error(path + ": doc " + ad.doc.doc_id + ": label \"" + label +
                    "\" not in vocabulary");
      }
      ad.labels.insert(label);
    }
    if (!ids.insert(ad.doc.doc_id).second) {
      throw Error(path + ": duplicate doc_id " + ad.doc.doc_id);
    }
    split.docs.push_back(std::move(ad));
  }
  return split;
}

namespace {

ordered_json doc_to_json(const AnnotatedDoc& ad) {
  ordered_json rec;
  rec["doc_id"] = ad.doc.doc_id;
  rec["title"] = ad.doc.title;
  rec["abstract"] = ad.doc.abstract_text;
  rec["mentions"] = json::array();
  for (const auto& m : ad.mentions) {
    ordered_json jm;
    jm["type"] = m.entity_type;
    jm["start"] = m.start;
    jm["end"] = m.end;
    jm["surface"] = m.surface;
    if (!m.concept_id.empty()) jm["concept_id"] = m.concept_id;
    rec["mentions"].push_back(std::move(jm));
  }
  rec["relations"] = json::array();
  for (const auto& r : ad.relations) {
    ordered_json jr;
    jr["subject"] = r.subject_id;
    jr["object"] = r.object_id;
    if (r.relation_type) jr["type"] = *r.relation_type;
    rec["relations"].push_back(std::move(jr));
  }
  rec["labels"] = json::array();
  for (const auto& l : ad.labels) rec["labels"].push_back(l);
  return rec;
}

AnnotatedDoc doc_from_json(const json& rec, const std::string& origin) {
  AnnotatedDoc ad;
  ad.doc.doc_id = rec.at("doc_id").get<std::string>();
  if (rec.contains("title")) ad.doc.title = rec["title"].get<std::string>();
  if (rec.contains("abstract")) ad.doc.abstract_text = rec["abstract"].get<std::string>();
  if (ad.doc.title.empty() && rec.contains("text")) ad.doc.title = rec["text"].get<std::string>();
  if (rec.contains("mentions")) {
    for (const auto& jm : rec["mentions"]) {
      Mention m;
      m.entity_type = jm.at("type").get<std::string>();
      m.start = jm.at("start").get<std::size_t>();
      m.end = jm.at("end").get<std::size_t>();
      m.surface = jm.at("surface").get<std::string>();
      if (jm.contains("concept_id")) m.concept_id = jm["concept_id"].get<std::string>();
      check_mention(ad, m, origin);
      ad.mentions.push_back(std::move(m));
    }
  }
  if (rec.contains("relations")) {
    for (const auto& jr : rec["relations"]) {
      RelationRecord r;
      r.subject_id = jr.at("subject").get<std::string>();
      r.object_id = jr.at("object").get<std::string>();
      if (jr.contains("type")) r.relation_type = jr["type"].get<std::string>();
      ad.relations.push_back(std::move(r));
    }
  }
  if (rec.contains("labels")) {
    for (const auto& l : rec["labels"]) ad.labels.insert(l.get<std::string>());
  }
  return ad;
}

}  // namespace

DatasetSplit load_json_lines(const std::string& path) {
  DatasetSplit split;
  split.name = path;
  std::istringstream in(read_file(path));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path + ": line " + std::to_string(line_no) + ": bad JSON: " + e.what());
    }
    split.docs.push_back(doc_from_json(rec, path));
  }
  validate_split(split);
  return split;
}

std::string render_split(const DatasetSplit& split, SplitFormat format) {
  std::ostringstream out;
  if (format == SplitFormat::kJsonLines) {
    for (const auto& ad : split.docs) {
      out << doc_to_json(ad).dump() << "\n";
    }
    return out.str();
  }
  for (const auto& ad : split.docs) {
    out << ad.doc.doc_id << "|t|" << ad.doc.title << "\n";
    out << ad.doc.doc_id << "|a|" << ad.doc.abstract_text << "\n";
    for (const auto& m : ad.mentions) {
      out << ad.doc.doc_id << '\t' << m.start << '\t' << m.end << '\t' << m.surface << '\t'
          << m.entity_type;
      if (!m.concept_id.empty()) out << '\t' << m.concept_id;
      out << "\n";
    }
    for (const auto& r : ad.relations) {
      // PubTator relation rows always carry a type token; untyped in-memory
      // records round-trip through JSON-lines instead.
      if (!r.relation_type) {
        throw Error("render_split: doc " + ad.doc.doc_id +
                    ": untyped relation cannot be written as pubtator; use json-lines");
      }
      out << ad.doc.doc_id << '\t' << *r.relation_type << '\t' << r.subject_id << '\t'
          << r.object_id << "\n";
    }
    out << "\n";
  }
  return out.str();
}

void write_split(const DatasetSplit& split, const std::string& path, SplitFormat format) {
  write_file(path, render_split(split, format));
}

}  // namespace biomine
