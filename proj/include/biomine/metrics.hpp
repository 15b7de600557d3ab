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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biomine/corpus.hpp"

namespace biomine {

struct LabelScore {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;  // gold count
};

struct DistributionDiagnostics {
  double mean_items_per_doc_pred = 0.0;
  double mean_items_per_doc_gold = 0.0;
  std::map<std::string, int64_t> label_frequency_pred;
  std::map<std::string, int64_t> label_frequency_gold;
  std::optional<double> mention_word_length_mean_pred;
  std::optional<double> mention_word_length_mean_gold;
  double wasserstein = 0.0;  // on per-document item counts
  std::optional<double> wasserstein_categories;  // on declared category axis
  double mannwhitney_u = 0.0;
  double mannwhitney_p_one_sided = 1.0;
  std::vector<std::string> warnings;
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, LabelScore> per_label;
  std::optional<DistributionDiagnostics> diagnostics;
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
  int64_t parse_warning_count = 0;
};

// Entity-level micro P/R/F1: a prediction counts iff (doc_id, start, end,
// entity_type) exactly matches a gold mention. per_label carries per-type
// micro scores for inspection.
EvalReport entity_f1(const DatasetSplit& pred, const DatasetSplit& gold);

enum class MacroTask { kLabels, kRelations };

// Macro-averaged P/R/F1 over labels (or relation types) with nonzero gold or
// predicted support. Relation matching is unordered on the id pair, plus
// type equality when typed=true.
EvalReport macro_f1(const DatasetSplit& pred, const DatasetSplit& gold, MacroTask task,
                    const std::vector<std::string>& vocabulary, bool typed = true);

// Per-document item counts (mentions, relations, or labels), document order.
std::vector<int64_t> count_distribution(const DatasetSplit& split, Task task);

// Whitespace-token counts per mention surface.
std::vector<int64_t> mention_word_lengths(const std::vector<Mention>& mentions);

// Exact empirical 1-D Wasserstein-1 distance via the quantile-function sweep.
double wasserstein1(std::span<const double> sample_a, std::span<const double> sample_b);
double wasserstein1(const std::vector<int64_t>& a, const std::vector<int64_t>& b);

// W-1 between two discrete distributions on an ordered category axis with
// unit spacing; weights are normalized internally.
double wasserstein1_categorical(std::span<const double> weights_a,
                                std::span<const double> weights_b);

enum class Alternative { kGreater, kLess };

enum class MwuMethod { kAuto, kExact, kApprox };

struct MannWhitneyResult {
  double u = 0.0;  // U statistic of the first sample, midrank ties
  double p = 1.0;
  bool exact_path = false;
  bool zero_variance = false;
};

// One-sided Mann-Whitney U. Small tie-free samples (n_a*n_b <= 400) take the
// exact count-distribution path; everything else uses the normal
// approximation with tie-corrected variance and continuity correction.
// kExact and kApprox force a path (kExact requires tie-free data).
MannWhitneyResult mann_whitney_one_sided(std::span<const double> sample_a,
                                         std::span<const double> sample_b, Alternative alt,
                                         MwuMethod method = MwuMethod::kAuto);

struct DiagnosticsConfig {
  Task task = Task::kNer;
  std::vector<std::string> category_order;  // optional axis for typed tasks
  Alternative alternative = Alternative::kGreater;
};

DistributionDiagnostics diagnostics(const DatasetSplit& pred, const DatasetSplit& gold,
                                    const DiagnosticsConfig& config);

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

}  // namespace biomine
