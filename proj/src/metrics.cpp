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

#include "biomine/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "biomine/common.hpp"

namespace biomine {

namespace {

void check_alignment(const DatasetSplit& pred, const DatasetSplit& gold) {
  if (pred.size() != gold.size()) {
    throw Error("evaluation: split sizes differ (pred " + std::to_string(pred.size()) +
                ", gold " + std::to_string(gold.size()) + ")");
  }
  std::set<std::string> pred_ids, gold_ids;
  for (const auto& d : pred.docs) pred_ids.insert(d.doc.doc_id);
  for (const auto& d : gold.docs) gold_ids.insert(d.doc.doc_id);
  if (pred_ids != gold_ids) {
    std::string diff;
    for (const auto& id : gold_ids) {
      if (!pred_ids.count(id)) {
        diff = id;
        break;
      }
    }
    if (diff.empty()) {
      for (const auto& id : pred_ids) {
        if (!gold_ids.count(id)) {
          diff = id;
          break;
        }
      }
    }
    throw Error("evaluation: doc_id sets differ, e.g. " + diff);
  }
}

// Division conventions: P=0 when nothing was predicted, R=0 when there is no
// gold, F1 computed from counts in one division so it is the correctly
// rounded value of 2tp/(2tp+fp+fn).
void fill_prf(LabelScore& s) {
  const int64_t pred_n = s.tp + s.fp;
  const int64_t gold_n = s.tp + s.fn;
  s.precision = pred_n > 0 ? static_cast<double>(s.tp) / static_cast<double>(pred_n) : 0.0;
  s.recall = gold_n > 0 ? static_cast<double>(s.tp) / static_cast<double>(gold_n) : 0.0;
  s.f1 = (pred_n + gold_n) > 0
             ? (2.0 * static_cast<double>(s.tp)) / static_cast<double>(pred_n + gold_n)
             : 0.0;
  s.support = gold_n;
}

struct MentionKey {
  std::size_t start;
  std::size_t end;
  std::string type;
  friend auto operator<=>(const MentionKey&, const MentionKey&) = default;
};

std::string relation_label(const RelationRecord& r, bool typed) {
  return typed ? r.relation_type.value_or("") : std::string();
}

// Canonical match key for a relation: unordered id pair plus type when typed.
std::tuple<std::string, std::string, std::string> relation_key(const RelationRecord& r,
                                                               bool typed) {
  auto lo = std::min(r.subject_id, r.object_id);
  auto hi = std::max(r.subject_id, r.object_id);
  return {lo, hi, typed ? r.relation_type.value_or("") : std::string()};
}

double mean(std::span<const int64_t> xs) {
  if (xs.empty()) return 0.0;
  long double sum = 0;
  for (auto x : xs) sum += static_cast<long double>(x);
  return static_cast<double>(sum / static_cast<long double>(xs.size()));
}

std::vector<double> to_double(const std::vector<int64_t>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (auto x : xs) out.push_back(static_cast<double>(x));
  return out;
}

}  // namespace

EvalReport entity_f1(const DatasetSplit& pred, const DatasetSplit& gold) {
  check_alignment(pred, gold);
  EvalReport report;
  LabelScore total;
  std::map<std::string, LabelScore> per_type;

  for (const auto& gd : gold.docs) {
    const AnnotatedDoc* pd = pred.find(gd.doc.doc_id);
    std::multiset<MentionKey> gold_keys;
    for (const auto& m : gd.mentions) gold_keys.insert({m.start, m.end, m.entity_type});
    for (const auto& m : pd->mentions) {
      MentionKey k{m.start, m.end, m.entity_type};
      auto it = gold_keys.find(k);
      if (it != gold_keys.end()) {
        gold_keys.erase(it);
        total.tp++;
        per_type[m.entity_type].tp++;
      } else {
        total.fp++;
        per_type[m.entity_type].fp++;
      }
    }
    for (const auto& k : gold_keys) {
      total.fn++;
      per_type[k.type].fn++;
    }
  }

  fill_prf(total);
  report.precision = total.precision;
  report.recall = total.recall;
  report.f1 = total.f1;
  for (auto& [type, score] : per_type) {
    fill_prf(score);
    report.per_label[type] = score;
  }
  return report;
}

EvalReport macro_f1(const DatasetSplit& pred, const DatasetSplit& gold, MacroTask task,
                    const std::vector<std::string>& vocabulary, bool typed) {
  check_alignment(pred, gold);
  EvalReport report;
  std::map<std::string, LabelScore> scores;
  for (const auto& l : vocabulary) scores[l];  // fix label order up front
  if (task == MacroTask::kRelations && !typed) scores[""];

  for (const auto& gd : gold.docs) {
    const AnnotatedDoc* pd = pred.find(gd.doc.doc_id);
    if (task == MacroTask::kLabels) {
      for (auto& [label, score] : scores) {
        bool in_pred = pd->labels.count(label) > 0;
        bool in_gold = gd.labels.count(label) > 0;
        if (in_pred && in_gold) score.tp++;
        else if (in_pred) score.fp++;
        else if (in_gold) score.fn++;
      }
    } else {
      std::set<std::tuple<std::string, std::string, std::string>> gold_keys, pred_keys;
      std::map<std::tuple<std::string, std::string, std::string>, std::string> key_label;
      for (const auto& r : gd.relations) {
        auto k = relation_key(r, typed);
        gold_keys.insert(k);
        key_label[k] = relation_label(r, typed);
      }
      for (const auto& r : pd->relations) {
        auto k = relation_key(r, typed);
        if (!pred_keys.insert(k).second) continue;  // duplicates collapse
        key_label.emplace(k, relation_label(r, typed));
      }
      for (const auto& [k, label] : key_label) {
        auto it = scores.find(label);
        if (it == scores.end()) it = scores.emplace(label, LabelScore{}).first;
        bool in_pred = pred_keys.count(k) > 0;
        bool in_gold = gold_keys.count(k) > 0;
        if (in_pred && in_gold) it->second.tp++;
        else if (in_pred) it->second.fp++;
        else it->second.fn++;
      }
    }
  }

  double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0;
  int64_t active = 0;
  for (auto& [label, score] : scores) {
    fill_prf(score);
    report.per_label[label] = score;
    if (score.tp + score.fp + score.fn > 0) {
      sum_p += score.precision;
      sum_r += score.recall;
      sum_f1 += score.f1;
      active++;
    }
  }
  if (active > 0) {
    report.precision = sum_p / static_cast<double>(active);
    report.recall = sum_r / static_cast<double>(active);
    report.f1 = sum_f1 / static_cast<double>(active);
  }
  return report;
}

std::vector<int64_t> count_distribution(const DatasetSplit& split, Task task) {
  std::vector<int64_t> counts;
  counts.reserve(split.size());
  for (const auto& d : split.docs) {
    switch (task) {
      case Task::kNer: counts.push_back(static_cast<int64_t>(d.mentions.size())); break;
      case Task::kRe: counts.push_back(static_cast<int64_t>(d.relations.size())); break;
      case Task::kLabels: counts.push_back(static_cast<int64_t>(d.labels.size())); break;
    }
  }
  return counts;
}

std::vector<int64_t> mention_word_lengths(const std::vector<Mention>& mentions) {
  std::vector<int64_t> lengths;
  lengths.reserve(mentions.size());
  for (const auto& m : mentions) {
    int64_t words = 0;
    bool in_word = false;
    for (char c : m.surface) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        in_word = false;
      } else if (!in_word) {
        words++;
        in_word = true;
      }
    }
    lengths.push_back(words);
  }
  return lengths;
}

double wasserstein1(std::span<const double> sample_a, std::span<const double> sample_b) {
  if (sample_a.empty() || sample_b.empty()) {
    throw Error("wasserstein1: empty sample");
  }
  std::vector<double> a(sample_a.begin(), sample_a.end());
  std::vector<double> b(sample_b.begin(), sample_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());

  // Integrate |F_a^{-1}(q) - F_b^{-1}(q)| over q in (0,1); the quantile
  // functions are step functions with breakpoints at i/n_a and j/n_b.
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  std::size_t i = 0, j = 0;
  double pos = 0.0;
  double total = 0.0;
  while (i < na && j < nb) {
    double next_a = static_cast<double>(i + 1) / static_cast<double>(na);
    double next_b = static_cast<double>(j + 1) / static_cast<double>(nb);
    double next = std::min(next_a, next_b);
    total += (next - pos) * std::abs(a[i] - b[j]);
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
    pos = next;
  }
  return total;
}

double wasserstein1(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  auto da = to_double(a);
  auto db = to_double(b);
  return wasserstein1(std::span<const double>(da), std::span<const double>(db));
}

double wasserstein1_categorical(std::span<const double> weights_a,
                                std::span<const double> weights_b) {
  if (weights_a.size() != weights_b.size()) {
    throw Error("wasserstein1_categorical: axis lengths differ");
  }
  if (weights_a.empty()) throw Error("wasserstein1_categorical: empty axis");
  double sum_a = 0.0, sum_b = 0.0;
  for (double w : weights_a) sum_a += w;
  for (double w : weights_b) sum_b += w;
  if (sum_a <= 0.0 || sum_b <= 0.0) throw Error("wasserstein1_categorical: zero mass");
  // Unit spacing between adjacent categories: W1 = sum of |CDF differences|.
  double cum = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < weights_a.size(); ++k) {
    cum += weights_a[k] / sum_a - weights_b[k] / sum_b;
    total += std::abs(cum);
  }
  return total;
}

namespace {

struct RankedPool {
  std::vector<double> ranks_a;  // midranks of sample a in the pooled order
  double tie_term = 0.0;        // sum over tie groups of (t^3 - t)
  bool has_ties = false;
};

RankedPool midranks(std::span<const double> a, std::span<const double> b) {
  struct Entry {
    double value;
    bool from_a;
  };
  std::vector<Entry> pool;
  pool.reserve(a.size() + b.size());
  for (double v : a) pool.push_back({v, true});
  for (double v : b) pool.push_back({v, false});
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Entry& x, const Entry& y) { return x.value < y.value; });

  RankedPool out;
  std::size_t i = 0;
  while (i < pool.size()) {
    std::size_t j = i;
    while (j < pool.size() && pool[j].value == pool[i].value) ++j;
    const double t = static_cast<double>(j - i);
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    if (j - i > 1) {
      out.has_ties = true;
      out.tie_term += t * t * t - t;
    }
    for (std::size_t k = i; k < j; ++k) {
      if (pool[k].from_a) out.ranks_a.push_back(rank);
    }
    i = j;
  }
  return out;
}

// Counts of tie-free arrangements by U value. Recurrence on the largest
// pooled element: from A it beats all n B values, from B it beats none, so
//   f(m, n, u) = f(m-1, n, u-n) + f(m, n-1, u)
// with f(m, 0, 0) = f(0, n, 0) = 1.
std::vector<double> exact_u_counts(int m, int n) {
  std::vector<std::vector<double>> prev(static_cast<std::size_t>(m) + 1);
  for (auto& row : prev) row = {1.0};
  for (int nn = 1; nn <= n; ++nn) {
    std::vector<std::vector<double>> cur(static_cast<std::size_t>(m) + 1);
    cur[0] = {1.0};
    for (int mm = 1; mm <= m; ++mm) {
      auto& row = cur[static_cast<std::size_t>(mm)];
      row.assign(static_cast<std::size_t>(mm * nn) + 1, 0.0);
      for (int u = 0; u <= mm * nn; ++u) {
        double ways = 0.0;
        if (u >= nn && u - nn <= (mm - 1) * nn) {
          ways += cur[static_cast<std::size_t>(mm - 1)][static_cast<std::size_t>(u - nn)];
        }
        if (u <= mm * (nn - 1)) {
          ways += prev[static_cast<std::size_t>(mm)][static_cast<std::size_t>(u)];
        }
        row[static_cast<std::size_t>(u)] = ways;
      }
    }
    prev = std::move(cur);
  }
  return prev[static_cast<std::size_t>(m)];
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

MannWhitneyResult mann_whitney_one_sided(std::span<const double> sample_a,
                                         std::span<const double> sample_b, Alternative alt,
                                         MwuMethod method) {
  if (sample_a.empty() || sample_b.empty()) {
    throw Error("mann_whitney: empty sample");
  }
  const double na = static_cast<double>(sample_a.size());
  const double nb = static_cast<double>(sample_b.size());
  const double n_total = na + nb;

  RankedPool pool = midranks(sample_a, sample_b);
  double rank_sum_a = 0.0;
  for (double r : pool.ranks_a) rank_sum_a += r;
  const double u = rank_sum_a - na * (na + 1.0) / 2.0;

  MannWhitneyResult result;
  result.u = u;

  const double mu = na * nb / 2.0;
  const double variance =
      na * nb / 12.0 * ((n_total + 1.0) - pool.tie_term / (n_total * (n_total - 1.0)));
  if (variance <= 0.0) {
    result.p = 1.0;
    result.zero_variance = true;
    return result;
  }

  if (method == MwuMethod::kExact && pool.has_ties) {
    throw Error("mann_whitney: exact method requires tie-free samples");
  }
  const bool take_exact = method == MwuMethod::kExact ||
                          (method == MwuMethod::kAuto && !pool.has_ties && na * nb <= 400.0);
  if (take_exact) {
    result.exact_path = true;
    auto counts = exact_u_counts(static_cast<int>(na), static_cast<int>(nb));
    double total = 0.0;
    for (double c : counts) total += c;
    const int u_int = static_cast<int>(std::llround(u));
    double tail = 0.0;
    if (alt == Alternative::kGreater) {
      for (std::size_t k = static_cast<std::size_t>(u_int); k < counts.size(); ++k) tail += counts[k];
    } else {
      for (int k = 0; k <= u_int; ++k) tail += counts[static_cast<std::size_t>(k)];
    }
    result.p = tail / total;
    return result;
  }

  const double sigma = std::sqrt(variance);
  if (alt == Alternative::kGreater) {
    result.p = normal_sf((u - mu - 0.5) / sigma);
  } else {
    result.p = normal_cdf((u - mu + 0.5) / sigma);
  }
  result.p = std::min(result.p, 1.0);
  result.p = std::max(result.p, 1e-300);
  return result;
}

DistributionDiagnostics diagnostics(const DatasetSplit& pred, const DatasetSplit& gold,
                                    const DiagnosticsConfig& config) {
  check_alignment(pred, gold);
  DistributionDiagnostics d;

  // Per-document counts in gold document order on both sides.
  DatasetSplit pred_aligned;
  pred_aligned.docs.reserve(pred.size());
  for (const auto& gd : gold.docs) pred_aligned.docs.push_back(*pred.find(gd.doc.doc_id));
  auto pred_counts = count_distribution(pred_aligned, config.task);
  auto gold_counts = count_distribution(gold, config.task);
  d.mean_items_per_doc_pred = mean(pred_counts);
  d.mean_items_per_doc_gold = mean(gold_counts);

  auto add_frequencies = [&](const DatasetSplit& split, std::map<std::string, int64_t>& freq) {
    for (const auto& doc : split.docs) {
      switch (config.task) {
        case Task::kNer:
          for (const auto& m : doc.mentions) freq[m.entity_type]++;
          break;
        case Task::kRe:
          for (const auto& r : doc.relations) freq[r.relation_type.value_or("(untyped)")]++;
          break;
        case Task::kLabels:
          for (const auto& l : doc.labels) freq[l]++;
          break;
      }
    }
  };
  add_frequencies(pred_aligned, d.label_frequency_pred);
  add_frequencies(gold, d.label_frequency_gold);

  if (config.task == Task::kNer) {
    std::vector<Mention> pred_mentions, gold_mentions;
    for (const auto& doc : pred_aligned.docs)
      pred_mentions.insert(pred_mentions.end(), doc.mentions.begin(), doc.mentions.end());
    for (const auto& doc : gold.docs)
      gold_mentions.insert(gold_mentions.end(), doc.mentions.begin(), doc.mentions.end());
    auto pl = mention_word_lengths(pred_mentions);
    auto gl = mention_word_lengths(gold_mentions);
    if (!pl.empty()) d.mention_word_length_mean_pred = mean(pl);
    if (!gl.empty()) d.mention_word_length_mean_gold = mean(gl);
  }

  if (!pred_counts.empty() && !gold_counts.empty()) {
    d.wasserstein = wasserstein1(pred_counts, gold_counts);
    auto pc = to_double(pred_counts);
    auto gc = to_double(gold_counts);
    auto mwu = mann_whitney_one_sided(pc, gc, config.alternative);
    d.mannwhitney_u = mwu.u;
    d.mannwhitney_p_one_sided = mwu.p;
    if (mwu.zero_variance) d.warnings.push_back("mann-whitney: zero variance, p forced to 1");
  }

  if (!config.category_order.empty()) {
    std::vector<double> wa, wb;
    for (const auto& cat : config.category_order) {
      auto pit = d.label_frequency_pred.find(cat);
      auto git = d.label_frequency_gold.find(cat);
      wa.push_back(pit == d.label_frequency_pred.end() ? 0.0 : static_cast<double>(pit->second));
      wb.push_back(git == d.label_frequency_gold.end() ? 0.0 : static_cast<double>(git->second));
    }
    double mass_a = 0.0, mass_b = 0.0;
    for (double w : wa) mass_a += w;
    for (double w : wb) mass_b += w;
    if (mass_a > 0.0 && mass_b > 0.0) {
      d.wasserstein_categories = wasserstein1_categorical(wa, wb);
    } else {
      d.warnings.push_back("category axis has zero mass on one side; categorical W1 skipped");
    }
  }
  return d;
}

namespace {

nlohmann::ordered_json diagnostics_to_json(const DistributionDiagnostics& d) {
  nlohmann::ordered_json j;
  j["mean_items_per_doc_pred"] = d.mean_items_per_doc_pred;
  j["mean_items_per_doc_gold"] = d.mean_items_per_doc_gold;
  j["label_frequency_pred"] = d.label_frequency_pred;
  j["label_frequency_gold"] = d.label_frequency_gold;
  if (d.mention_word_length_mean_pred)
    j["mention_word_length_mean_pred"] = *d.mention_word_length_mean_pred;
  if (d.mention_word_length_mean_gold)
    j["mention_word_length_mean_gold"] = *d.mention_word_length_mean_gold;
  j["wasserstein"] = d.wasserstein;
  if (d.wasserstein_categories) j["wasserstein_categories"] = *d.wasserstein_categories;
  j["mannwhitney_u"] = d.mannwhitney_u;
  j["mannwhitney_p_one_sided"] = d.mannwhitney_p_one_sided;
  j["warnings"] = d.warnings;
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  nlohmann::ordered_json labels;
  for (const auto& [label, s] : report.per_label) {
    nlohmann::ordered_json row;
    row["precision"] = s.precision;
    row["recall"] = s.recall;
    row["f1"] = s.f1;
    row["support"] = s.support;
    row["tp"] = s.tp;
    row["fp"] = s.fp;
    row["fn"] = s.fn;
    labels[label] = std::move(row);
  }
  j["per_label"] = std::move(labels);
  if (report.diagnostics) j["diagnostics"] = diagnostics_to_json(*report.diagnostics);
  j["prompt_tokens"] = report.prompt_tokens;
  j["completion_tokens"] = report.completion_tokens;
  j["parse_warning_count"] = report.parse_warning_count;
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "label,precision,recall,f1,support,tp,fp,fn\n";
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += "\"\"";
      else q += c;
    }
    return q + "\"";
  };
  for (const auto& [label, s] : report.per_label) {
    out << quote(label) << ',' << s.precision << ',' << s.recall << ',' << s.f1 << ','
        << s.support << ',' << s.tp << ',' << s.fp << ',' << s.fn << "\n";
  }
  return out.str();
}

}  // namespace biomine
