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

#include "biomine/runconfig.hpp"

#include <sstream>

#include "biomine/common.hpp"

namespace biomine {

RunConfig RunConfig::from_file(const std::string& path) {
  return from_string(read_file(path), path);
}

RunConfig RunConfig::from_string(const std::string& content, const std::string& origin) {
  RunConfig config;
  std::istringstream in(content);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(origin + ": line " + std::to_string(line_no) + ": expected `key = value`");
    }
    config.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return config;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw Error("run config: empty key");
  entries_[key] = value;
}

void RunConfig::apply_override(const std::string& key_equals_value) {
  size_t eq = key_equals_value.find('=');
  if (eq == std::string::npos) {
    throw Error("override must be key=value, got: " + key_equals_value);
  }
  set(trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

std::optional<std::string> RunConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::string RunConfig::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw Error("run config: missing required key `" + key + "`");
  return *v;
}

std::string RunConfig::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    return std::stoll(*v);
  } catch (...) {
    throw Error("run config: `" + key + "` must be an integer, got: " + *v);
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    return std::stod(*v);
  } catch (...) {
    throw Error("run config: `" + key + "` must be a number, got: " + *v);
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string s = lower(*v);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw Error("run config: `" + key + "` must be a boolean, got: " + *v);
}

std::string RunConfig::config_hash() const {
  uint64_t h = kFnvOffset;
  for (const auto& [k, v] : entries_) {
    h = fnv1a64(k, h);
    h = fnv1a64("=", h);
    h = fnv1a64(v, h);
    h = fnv1a64("\n", h);
  }
  return to_hex(h);
}

}  // namespace biomine
