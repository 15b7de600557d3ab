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

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "biomine/common.hpp"
#include "biomine/gateway.hpp"

namespace biomine::test {

inline std::string fixtures_dir() { return BIOMINE_FIXTURES_DIR; }
inline std::string templates_dir() { return BIOMINE_TEMPLATES_DIR; }
inline std::string configs_dir() { return BIOMINE_CONFIGS_DIR; }
inline std::string guidelines_dir() { return BIOMINE_GUIDELINES_DIR; }

// Unique per-instance scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<uint64_t> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("biomine_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Deterministic pseudo-embedding: hash-seeded unit vector. Distinct texts
// land in distinct directions; identical texts coincide.
inline std::vector<float> hash_embedding(const std::string& text, std::size_t dim = 16) {
  std::mt19937_64 rng(fnv1a64(text));
  std::vector<float> v(dim);
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  for (auto& x : v) x = uni(rng);
  l2_normalize(v);
  return v;
}

inline std::shared_ptr<Backend> scripted_backend(CallbackBackend::ChatFn chat) {
  return std::make_shared<CallbackBackend>(
      "scripted", std::move(chat),
      [](const std::string& text, const std::string&) { return hash_embedding(text); });
}

}  // namespace biomine::test
