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

#include "biomine/common.hpp"
#include "biomine/parse.hpp"

namespace biomine {

const char* alignment_quality_name(AlignmentQuality q) {
  switch (q) {
    case AlignmentQuality::kExact: return "exact";
    case AlignmentQuality::kRepaired: return "repaired";
    case AlignmentQuality::kDegraded: return "degraded";
  }
  return "unknown";
}

namespace {

std::string escape_markup(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// Restores the entities escape_markup emits plus the common quote forms
// models sometimes produce on their own.
std::string unescape_markup(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size();) {
    if (s[i] == '&') {
      auto rest = s.substr(i);
      if (starts_with(rest, "&amp;")) { out += '&'; i += 5; continue; }
      if (starts_with(rest, "&lt;")) { out += '<'; i += 4; continue; }
      if (starts_with(rest, "&gt;")) { out += '>'; i += 4; continue; }
      if (starts_with(rest, "&quot;")) { out += '"'; i += 6; continue; }
      if (starts_with(rest, "&#39;")) { out += '\''; i += 5; continue; }
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

// Longer mentions win; survivors must be disjoint since the tag scheme
// cannot nest or cross.
std::vector<Mention> resolve_overlaps(std::vector<Mention> mentions,
                                      std::vector<std::string>* warnings) {
  std::stable_sort(mentions.begin(), mentions.end(), [](const Mention& a, const Mention& b) {
    auto la = a.end - a.start;
    auto lb = b.end - b.start;
    if (la != lb) return la > lb;
    return a.start < b.start;
  });
  std::vector<Mention> kept;
  for (auto& m : mentions) {
    bool overlaps = false;
    for (const auto& k : kept) {
      if (m.start < k.end && k.start < m.end) {
        overlaps = true;
        break;
      }
    }
    if (overlaps) {
      if (warnings) {
        warnings->push_back("render_ner: dropped overlapping mention \"" + m.surface + "\" at " +
                            std::to_string(m.start));
      }
    } else {
      kept.push_back(std::move(m));
    }
  }
  std::sort(kept.begin(), kept.end(),
            [](const Mention& a, const Mention& b) { return a.start < b.start; });
  return kept;
}

struct TagToken {
  enum Kind { kText, kOpen, kClose } kind;
  std::string payload;  // text content (unescaped) or entity type
  bool repaired = false;
};

bool is_tag_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

// Scans one candidate tag starting at s[pos] == '<'. Returns true and
// advances pos past '>' when the text looks like a tag; leaves pos alone
// otherwise so the caller keeps the '<' as literal text.
bool scan_tag(const std::string& s, size_t& pos, TagToken& out) {
  size_t i = pos + 1;
  auto skip_ws = [&] {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  };
  bool closing = false;
  skip_ws();
  if (i < s.size() && s[i] == '/') {
    closing = true;
    ++i;
  }
  skip_ws();
  size_t word_begin = i;
  while (i < s.size() && is_tag_word_char(s[i])) ++i;
  if (i == word_begin) return false;
  std::string word = s.substr(word_begin, i - word_begin);
  skip_ws();

  std::string value;
  bool has_value = false;
  if (!closing && i < s.size() && s[i] == '=') {
    ++i;
    skip_ws();
    if (i < s.size() && (s[i] == '"' || s[i] == '\'')) {
      char quote = s[i];
      ++i;
      size_t value_begin = i;
      while (i < s.size() && s[i] != quote && s[i] != '>' && s[i] != '\n') ++i;
      if (i >= s.size() || s[i] != quote) {
        // tolerate a missing closing quote before '>'
        value = trim(s.substr(value_begin, i - value_begin));
      } else {
        value = s.substr(value_begin, i - value_begin);
        ++i;
      }
    } else {
      size_t value_begin = i;
      while (i < s.size() && s[i] != '>' && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      value = s.substr(value_begin, i - value_begin);
    }
    has_value = true;
    skip_ws();
  }
  bool self_closing = false;
  if (!closing && i < s.size() && s[i] == '/') {
    self_closing = true;
    ++i;
    skip_ws();
  }
  if (i >= s.size() || s[i] != '>') return false;

  if (closing) {
    out = {TagToken::kClose, word, false};
  } else if (self_closing) {
    // an empty element marks nothing; surface it as a repaired no-op
    out = {TagToken::kClose, word, true};
  } else if (has_value) {
    out = {TagToken::kOpen, trim(value), false};
  } else {
    // bare <Disease> style: the word itself is the type
    out = {TagToken::kOpen, word, lower(word) != "type"};
  }
  pos = i + 1;
  return true;
}

struct RawMention {
  std::string type;
  size_t start = 0;  // offsets into the detagged text
  size_t end = 0;
};

struct DetagResult {
  std::string text;
  std::vector<RawMention> mentions;
  bool repaired = false;
  std::vector<std::string> warnings;
};

DetagResult tokenize_and_detag(const std::string& raw) {
  DetagResult out;
  std::string pending_text;
  std::optional<RawMention> open_mention;

  auto flush_text = [&] {
    out.text += unescape_markup(pending_text);
    pending_text.clear();
  };

  size_t pos = 0;
  while (pos < raw.size()) {
    if (raw[pos] == '<') {
      TagToken tok;
      size_t tag_pos = pos;
      if (scan_tag(raw, pos, tok)) {
        flush_text();
        if (tok.kind == TagToken::kOpen) {
          if (open_mention) {
            // nested or unclosed open: close the previous one here
            open_mention->end = out.text.size();
            out.mentions.push_back(*open_mention);
            out.repaired = true;
            out.warnings.push_back("parse_ner: tag for \"" + open_mention->type +
                                   "\" not closed before next tag; repaired");
          }
          open_mention = RawMention{tok.payload, out.text.size(), out.text.size()};
          if (tok.repaired) {
            out.repaired = true;
            out.warnings.push_back("parse_ner: bare tag form <" + tok.payload + "> accepted");
          }
        } else {
          if (open_mention) {
            open_mention->end = out.text.size();
            out.mentions.push_back(*open_mention);
            open_mention.reset();
            if (tok.repaired) out.repaired = true;
          } else {
            out.repaired = true;
            out.warnings.push_back("parse_ner: stray closing tag ignored");
          }
        }
        continue;
      }
      pending_text.push_back(raw[tag_pos]);
      ++pos;
      continue;
    }
    pending_text.push_back(raw[pos]);
    ++pos;
  }
  flush_text();
  if (open_mention) {
    open_mention->end = out.text.size();
    out.mentions.push_back(*open_mention);
    out.repaired = true;
    out.warnings.push_back("parse_ner: unclosed tag for \"" + open_mention->type +
                           "\" repaired at end of text");
  }
  return out;
}

// Monotone alignment between two strings that differ only in whitespace.
// Maps each non-whitespace index of `from` to its index in `to`; fails on
// the first non-whitespace mismatch.
bool align_ws_insensitive(const std::string& from, const std::string& to,
                          std::vector<size_t>& map_out) {
  map_out.assign(from.size(), std::string::npos);
  size_t i = 0, j = 0;
  while (true) {
    while (i < from.size() && std::isspace(static_cast<unsigned char>(from[i]))) ++i;
    while (j < to.size() && std::isspace(static_cast<unsigned char>(to[j]))) ++j;
    if (i >= from.size() || j >= to.size()) break;
    if (from[i] != to[j]) return false;
    map_out[i] = j;
    ++i;
    ++j;
  }
  while (i < from.size() && std::isspace(static_cast<unsigned char>(from[i]))) ++i;
  while (j < to.size() && std::isspace(static_cast<unsigned char>(to[j]))) ++j;
  return i >= from.size() && j >= to.size();
}

// Lowercased copy with whitespace runs collapsed to single spaces, plus a
// map from each output position to the source position.
void normalized_view(const std::string& s, std::string& norm, std::vector<size_t>& to_src) {
  norm.clear();
  to_src.clear();
  bool in_ws = true;
  for (size_t i = 0; i < s.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      in_ws = true;
      continue;
    }
    if (in_ws && !norm.empty()) {
      norm.push_back(' ');
      to_src.push_back(i);
    }
    norm.push_back(static_cast<char>(std::tolower(c)));
    to_src.push_back(i);
    in_ws = false;
  }
}

}  // namespace

std::string render_ner(const Document& doc, std::vector<Mention> mentions,
                       std::vector<std::string>* warnings) {
  const std::string text = doc.full_text();
  auto kept = resolve_overlaps(std::move(mentions), warnings);
  std::string out;
  out.reserve(text.size() + kept.size() * 24);
  size_t cursor = 0;
  for (const auto& m : kept) {
    out += escape_markup(std::string_view(text).substr(cursor, m.start - cursor));
    out += "<Type = \"" + m.entity_type + "\">";
    out += escape_markup(std::string_view(text).substr(m.start, m.end - m.start));
    out += "</Type>";
    cursor = m.end;
  }
  out += escape_markup(std::string_view(text).substr(cursor));
  return out;
}

std::string detag(const std::string& tagged) { return tokenize_and_detag(tagged).text; }

ParsedAnnotation parse_ner(const Document& doc, const std::string& tagged,
                           const std::set<std::string>& allowed_types) {
  ParsedAnnotation result;
  const std::string text = doc.full_text();

  DetagResult detagged = tokenize_and_detag(tagged);
  result.warnings = std::move(detagged.warnings);

  // Type filtering before alignment: unknown types are dropped, and casing
  // is normalized back to the configured type names.
  std::map<std::string, std::string> type_by_key;
  for (const auto& t : allowed_types) type_by_key[match_key(t)] = t;
  std::vector<RawMention> typed;
  for (auto& rm : detagged.mentions) {
    auto it = type_by_key.find(match_key(rm.type));
    if (it == type_by_key.end()) {
      result.warnings.push_back("parse_ner: unknown entity type \"" + rm.type + "\" dropped");
      continue;
    }
    rm.type = it->second;
    if (rm.start == rm.end) {
      result.warnings.push_back("parse_ner: empty mention of type \"" + rm.type + "\" dropped");
      detagged.repaired = true;
      continue;
    }
    typed.push_back(rm);
  }

  std::vector<size_t> d2f;
  if (align_ws_insensitive(detagged.text, text, d2f)) {
    for (const auto& rm : typed) {
      size_t s = rm.start;
      while (s < rm.end && d2f[s] == std::string::npos) ++s;
      size_t e = rm.end;
      while (e > s && d2f[e - 1] == std::string::npos) --e;
      if (s >= e) {
        result.warnings.push_back("parse_ner: whitespace-only mention dropped");
        continue;
      }
      Mention m;
      m.entity_type = rm.type;
      m.start = d2f[s];
      m.end = d2f[e - 1] + 1;
      m.surface = text.substr(m.start, m.end - m.start);
      result.mentions.push_back(std::move(m));
    }
    result.alignment_quality =
        detagged.repaired ? AlignmentQuality::kRepaired : AlignmentQuality::kExact;
    return result;
  }

  // Degraded path: the model rewrote the text. Recover each mention by
  // case-insensitive substring search, assigning occurrences left to right.
  result.alignment_quality = AlignmentQuality::kDegraded;
  result.warnings.push_back("parse_ner: response text does not match source; degraded alignment");

  std::string norm_doc;
  std::vector<size_t> norm_to_src;
  normalized_view(text, norm_doc, norm_to_src);
  std::sort(typed.begin(), typed.end(),
            [](const RawMention& a, const RawMention& b) { return a.start < b.start; });
  size_t search_cursor = 0;
  for (const auto& rm : typed) {
    std::string surface = detagged.text.substr(rm.start, rm.end - rm.start);
    std::string norm_surface = match_key(surface);
    if (norm_surface.empty()) continue;
    size_t at = norm_doc.find(norm_surface, search_cursor);
    if (at == std::string::npos) at = norm_doc.find(norm_surface);  // wrap: reuse earlier text
    if (at == std::string::npos) {
      result.warnings.push_back("parse_ner: mention \"" + surface + "\" not found in source text");
      continue;
    }
    Mention m;
    m.entity_type = rm.type;
    m.start = norm_to_src[at];
    m.end = norm_to_src[at + norm_surface.size() - 1] + 1;
    m.surface = text.substr(m.start, m.end - m.start);
    result.mentions.push_back(std::move(m));
    search_cursor = at + norm_surface.size();
  }
  return result;
}

}  // namespace biomine
