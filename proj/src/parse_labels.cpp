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

#include <optional>

#include <nlohmann/json.hpp>

#include "biomine/common.hpp"
#include "biomine/parse.hpp"

namespace biomine {

namespace {

using nlohmann::json;

// Fields two-step schemas and chatty models add around the actual labels.
bool is_reasoning_key(const std::string& key) {
  std::string k = match_key(key);
  return k == "intermediate_steps" || k == "intermediate steps" || k == "reasoning" ||
         k == "analysis" || k == "explanation" || k == "rationale" || k == "thoughts";
}

// Extracts the balanced {...} starting at `start`, honoring JSON strings.
// Returns one past the closing brace, or npos if unbalanced.
size_t balanced_object_end(const std::string& text, size_t start) {
  int depth = 0;
  bool in_string = false;
  for (size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') depth++;
    else if (c == '}') {
      depth--;
      if (depth == 0) return i + 1;
    }
  }
  return std::string::npos;
}

// Last parseable top-level JSON object in the text; reasoning prose and
// earlier drafts before it are skipped.
std::optional<json> last_json_object(const std::string& text) {
  std::optional<json> found;
  size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    size_t end = balanced_object_end(text, pos);
    if (end == std::string::npos) {
      ++pos;
      continue;
    }
    json candidate = json::parse(text.substr(pos, end - pos), nullptr, false);
    if (!candidate.is_discarded() && candidate.is_object()) {
      found = std::move(candidate);
      pos = end;  // skip nested objects of an accepted candidate
    } else {
      ++pos;
    }
  }
  return found;
}

bool truthy(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) return v.get<int64_t>() != 0;
  if (v.is_number_float()) return v.get<double>() != 0.0;
  if (v.is_string()) {
    std::string s = lower(trim(v.get<std::string>()));
    return s == "true" || s == "yes" || s == "y" || s == "1";
  }
  return false;
}

}  // namespace

std::string render_labels(const LabelSet& labels, const std::vector<std::string>& vocabulary) {
  nlohmann::ordered_json obj;
  for (const auto& label : vocabulary) {
    obj[label] = labels.count(label) > 0;
  }
  return obj.dump();
}

ParsedAnnotation parse_labels(const std::string& text, const std::vector<std::string>& vocabulary) {
  ParsedAnnotation result;
  auto obj = last_json_object(text);
  if (!obj) {
    result.warnings.push_back("parse_labels: no JSON object found in response");
    result.alignment_quality = AlignmentQuality::kDegraded;
    return result;
  }

  std::map<std::string, std::string> vocab_by_key;
  for (const auto& v : vocabulary) vocab_by_key[match_key(v)] = v;

  std::set<std::string> seen;
  std::vector<std::string> unknown;
  for (const auto& [key, value] : obj->items()) {
    if (is_reasoning_key(key)) continue;
    auto it = vocab_by_key.find(match_key(key));
    if (it == vocab_by_key.end()) {
      unknown.push_back(key);
      continue;
    }
    seen.insert(it->second);
    if (truthy(value)) result.labels.insert(it->second);
  }
  if (!unknown.empty()) {
    std::string joined;
    for (const auto& k : unknown) {
      if (!joined.empty()) joined += ", ";
      joined += k;
    }
    result.warnings.push_back("parse_labels: ignored keys outside vocabulary: " + joined);
  }
  for (const auto& v : vocabulary) {
    if (!seen.count(v)) {
      result.warnings.push_back("parse_labels: key \"" + v + "\" missing; treated as false");
    }
  }
  return result;
}

}  // namespace biomine
