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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "biomine/corpus.hpp"
#include "biomine/gateway.hpp"
#include "biomine/parse.hpp"
#include "biomine/prompt.hpp"

namespace biomine {

struct CandidatePrompt {
  PromptTemplate tmpl;
  std::optional<double> score;  // task metric on the scoring batch
  // (iteration, gradient text) chain back to the seed
  std::vector<std::pair<int, std::string>> lineage;
};

struct OptimizerConfig {
  int batch_size = 100;
  int gradients_per_iteration = 3;
  int beam_width = 3;
  int iterations = 10;
  uint64_t seed = 0;
  int error_samples = 4;  // concrete mistakes quoted in the critique request
};

struct BatchResult {
  const AnnotatedDoc* gold = nullptr;
  ParsedAnnotation predicted;
};

// One JSON line per scored candidate.
struct OptimizeLogEntry {
  int iteration = 0;
  std::string template_id;
  double score = 0.0;
  std::string gradient_text;
  std::string parent;
};

struct OptimizeResult {
  std::vector<CandidatePrompt> beam;  // sorted by descending score
  std::vector<OptimizeLogEntry> log;
  int64_t scored_candidates = 0;
};

// Runs the candidate over the batch with single-step plans and returns the
// task metric (macro-F1 for labels/relations, entity-level F1 for NER).
// Per-document gateway failures count as empty predictions.
double score_prompt(const CandidatePrompt& candidate, const std::vector<const AnnotatedDoc*>& batch,
                    Gateway& gateway, const TaskConfig& task, const PlanOptions& options,
                    std::vector<BatchResult>* results = nullptr);

// Natural-language critiques of the prompt: the request quotes the
// prediction/gold distribution gap plus sampled concrete errors and asks for
// n distinct critiques.
std::vector<std::string> build_gradient(const CandidatePrompt& candidate,
                                        const std::vector<BatchResult>& batch_results,
                                        Gateway& gateway, const TaskConfig& task,
                                        const PlanOptions& options, const OptimizerConfig& config);

// Rewrites the instruction text against one critique. Returns nothing when
// the rewrite loses a placeholder the original used.
std::optional<CandidatePrompt> apply_gradient(const CandidatePrompt& candidate,
                                              const std::string& gradient_text, Gateway& gateway,
                                              const TaskConfig& task, const PlanOptions& options,
                                              int iteration, int index,
                                              std::vector<std::string>* warnings = nullptr);

OptimizeResult optimize(const PromptTemplate& seed, const DatasetSplit& train_pool,
                        const OptimizerConfig& config, Gateway& gateway, const TaskConfig& task,
                        const PlanOptions& options);

std::string optimize_log_to_json(const OptimizeLogEntry& entry);

}  // namespace biomine
