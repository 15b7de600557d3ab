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

#include <iosfwd>
#include <string>

#include "biomine/runconfig.hpp"

namespace biomine::cli {

// Exit codes: configuration problems and runtime failure rates are
// distinguishable for callers.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitFailureRate = 3;

int cmd_annotate(const RunConfig& config, std::ostream& out);

struct EvaluateArgs {
  std::string predictions_path;
  std::string gold_path;
  std::string task_config_path;
  std::string output_dir;
};

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out);

int cmd_optimize(const RunConfig& config, std::ostream& out);

int cmd_build_corpus(const RunConfig& config, std::ostream& out);

int cmd_index(const RunConfig& config, std::ostream& out);

}  // namespace biomine::cli
