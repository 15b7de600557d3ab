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

#include <algorithm>
#include <cctype>
#include <set>

#include "biomine/common.hpp"
#include "biomine/parse.hpp"

namespace biomine {

namespace {

// Canonical form for relation-type comparison: case and the choice between
// spaces, hyphens, and underscores are all model noise.
std::string type_key(std::string_view s) {
  std::string out;
  bool sep = false;
  for (char c : s) {
    if (c == ' ' || c == '-' || c == '_') {
      sep = !out.empty();
      continue;
    }
    if (sep) {
      out.push_back('_');
      sep = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string strip_quotes(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

// Comma-split at parenthesis depth zero so surfaces like "disease (XY)"
// survive intact.
std::vector<std::string> split_top_level(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') depth++;
    if (c == ')') depth--;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct TupleScan {
  std::vector<std::vector<std::string>> tuples;  // trimmed fields
  // byte offset of each tuple's opening paren, for verb-prefix lookups
  std::vector<size_t> positions;
};

TupleScan scan_tuples(const std::string& text) {
  TupleScan out;
  size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] != '(') {
      ++pos;
      continue;
    }
    int depth = 1;
    size_t i = pos + 1;
    while (i < text.size() && depth > 0) {
      if (text[i] == '(') depth++;
      if (text[i] == ')') depth--;
      ++i;
    }
    if (depth != 0) break;  // unbalanced tail
    std::string inner = text.substr(pos + 1, i - pos - 2);
    if (inner.find(',') != std::string::npos) {
      std::vector<std::string> fields;
      for (auto& f : split_top_level(inner)) fields.push_back(strip_quotes(f));
      out.tuples.push_back(std::move(fields));
      out.positions.push_back(pos);
    }
    pos = i;
  }
  return out;
}

struct TypeTable {
  std::map<std::string, std::string> canonical;  // type_key -> vocabulary form
  bool enabled = false;
};

TypeTable make_type_table(const std::optional<std::vector<std::string>>& relation_types) {
  TypeTable t;
  if (!relation_types) return t;
  t.enabled = true;
  for (const auto& rt : *relation_types) t.canonical[type_key(rt)] = rt;
  return t;
}

std::optional<RelationRecord> fields_to_record(const std::vector<std::string>& fields,
                                               const TypeTable& types,
                                               const EntityCatalog& entities,
                                               std::vector<std::string>& warnings) {
  if (fields.size() < 2 || fields.size() > 3) {
    warnings.push_back("parse_re: skipping group with " + std::to_string(fields.size()) +
                       " fields");
    return std::nullopt;
  }
  RelationRecord rec;
  auto resolve = [&](const std::string& name) {
    if (auto id = entities.lookup(name)) return *id;
    warnings.push_back("parse_re: entity \"" + name + "\" not in known mention set; kept as-is");
    return name;
  };
  if (fields[0].empty() || fields[1].empty()) {
    warnings.push_back("parse_re: empty entity field skipped");
    return std::nullopt;
  }
  rec.subject_id = resolve(fields[0]);
  rec.object_id = resolve(fields[1]);
  if (rec.subject_id == rec.object_id) {
    warnings.push_back("parse_re: self-pair on \"" + rec.subject_id + "\" skipped");
    return std::nullopt;
  }
  if (fields.size() == 3) {
    if (types.enabled) {
      auto it = types.canonical.find(type_key(fields[2]));
      if (it == types.canonical.end()) {
        warnings.push_back("parse_re: unknown relation type \"" + fields[2] + "\" skipped");
        return std::nullopt;
      }
      rec.relation_type = it->second;
    } else {
      rec.relation_type = fields[2];
    }
  } else if (types.enabled && !types.canonical.empty()) {
    // triples expected but a tuple arrived; keep the pair untyped with a note
    warnings.push_back("parse_re: tuple without relation type; kept untyped");
  }
  return rec;
}

}  // namespace

void EntityCatalog::add(const std::string& surface, const std::string& concept_id) {
  id_by_key_.emplace(match_key(surface), concept_id);
  surface_by_id_.emplace(concept_id, surface);
}

std::optional<std::string> EntityCatalog::lookup(const std::string& surface) const {
  auto it = id_by_key_.find(match_key(surface));
  if (it == id_by_key_.end()) return std::nullopt;
  return it->second;
}

const std::string* EntityCatalog::surface_of(const std::string& concept_id) const {
  auto it = surface_by_id_.find(concept_id);
  return it == surface_by_id_.end() ? nullptr : &it->second;
}

EntityCatalog EntityCatalog::from_mentions(const std::vector<Mention>& mentions) {
  EntityCatalog cat;
  for (const auto& m : mentions) {
    cat.add(m.surface, m.concept_id.empty() ? m.surface : m.concept_id);
  }
  return cat;
}

std::string render_re(const std::vector<RelationRecord>& relations,
                      const EntityCatalog& entities) {
  std::string out;
  for (const auto& r : relations) {
    auto name = [&](const std::string& id) {
      const std::string* s = entities.surface_of(id);
      return s ? *s : id;
    };
    out += "(" + name(r.subject_id) + ", " + name(r.object_id);
    if (r.relation_type) out += ", " + *r.relation_type;
    out += ")\n";
  }
  return out;
}

ParsedAnnotation parse_re(const std::string& text,
                          const std::optional<std::vector<std::string>>& relation_types,
                          const EntityCatalog& entities) {
  ParsedAnnotation result;
  TypeTable types = make_type_table(relation_types);
  TupleScan scan = scan_tuples(text);

  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& fields : scan.tuples) {
    auto rec = fields_to_record(fields, types, entities, result.warnings);
    if (!rec) continue;
    auto lo = std::min(rec->subject_id, rec->object_id);
    auto hi = std::max(rec->subject_id, rec->object_id);
    if (!seen.insert({lo, hi, rec->relation_type.value_or("")}).second) continue;
    result.relations.push_back(std::move(*rec));
  }
  if (scan.tuples.empty() && !trim(text).empty()) {
    result.warnings.push_back("parse_re: no tuples found in response");
  }
  return result;
}

std::vector<ValidatedRelation> parse_re_validation(
    const std::string& text, const std::optional<std::vector<std::string>>& relation_types,
    const EntityCatalog& entities, std::vector<std::string>* warnings) {
  std::vector<std::string> local;
  std::vector<std::string>& warn = warnings ? *warnings : local;
  TypeTable types = make_type_table(relation_types);
  TupleScan scan = scan_tuples(text);

  std::vector<ValidatedRelation> out;
  for (size_t t = 0; t < scan.tuples.size(); ++t) {
    // The verb is the last word before the tuple's opening paren.
    size_t end = scan.positions[t];
    size_t b = end;
    while (b > 0 && std::isspace(static_cast<unsigned char>(text[b - 1]))) --b;
    size_t a = b;
    while (a > 0 && std::isalpha(static_cast<unsigned char>(text[a - 1]))) --a;
    std::string verb = lower(text.substr(a, b - a));

    ValidationVerb v;
    if (verb == "keep" || verb == "confirm") {
      v = ValidationVerb::kKeep;
    } else if (verb == "drop" || verb == "remove") {
      v = ValidationVerb::kDrop;
    } else if (verb == "retype" || verb == "reclassify") {
      v = ValidationVerb::kRetype;
    } else {
      warn.push_back("parse_re_validation: tuple without KEEP/DROP/RETYPE verb treated as KEEP");
      v = ValidationVerb::kKeep;
    }
    auto rec = fields_to_record(scan.tuples[t], types, entities, warn);
    if (!rec) continue;
    out.push_back({v, std::move(*rec)});
  }
  return out;
}

}  // namespace biomine
