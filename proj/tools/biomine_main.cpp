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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biomine/cli.hpp"
#include "biomine/common.hpp"

namespace {

biomine::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  biomine::RunConfig config =
      path.empty() ? biomine::RunConfig{} : biomine::RunConfig::from_file(path);
  for (const auto& kv : overrides) config.apply_override(kv);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-driven biomedical text mining: annotate, evaluate, optimize prompts, "
               "and build distillation corpora"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "run configuration file (key = value lines)");
    cmd->add_option("-s,--set", overrides, "override config entries (key=value)");
  };

  auto* annotate = app.add_subcommand("annotate", "run a strategy over a dataset split");
  add_config_opts(annotate);

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold annotations");
  biomine::cli::EvaluateArgs eval_args;
  evaluate->add_option("--pred", eval_args.predictions_path, "predictions.jsonl")->required();
  evaluate->add_option("--gold", eval_args.gold_path, "gold split file")->required();
  evaluate->add_option("--task-config", eval_args.task_config_path, "dataset config JSON")
      ->required();
  evaluate->add_option("--out", eval_args.output_dir, "output directory")->required();

  auto* optimize = app.add_subcommand("optimize", "prompt optimization by pseudo-gradient search");
  add_config_opts(optimize);

  auto* build = app.add_subcommand("build-corpus", "fetch articles and build a synthetic corpus");
  add_config_opts(build);

  auto* index = app.add_subcommand("index", "embed a training split into the on-disk cache");
  add_config_opts(index);

  CLI11_PARSE(app, argc, argv);

  try {
    if (annotate->parsed()) {
      return biomine::cli::cmd_annotate(load_config(config_path, overrides), std::cout);
    }
    if (evaluate->parsed()) {
      return biomine::cli::cmd_evaluate(eval_args, std::cout);
    }
    if (optimize->parsed()) {
      return biomine::cli::cmd_optimize(load_config(config_path, overrides), std::cout);
    }
    if (build->parsed()) {
      return biomine::cli::cmd_build_corpus(load_config(config_path, overrides), std::cout);
    }
    if (index->parsed()) {
      return biomine::cli::cmd_index(load_config(config_path, overrides), std::cout);
    }
  } catch (const biomine::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return biomine::cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return biomine::cli::kExitRuntime;
  }
  return biomine::cli::kExitConfig;
}
