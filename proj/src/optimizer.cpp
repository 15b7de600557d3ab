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

#include "biomine/optimizer.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "biomine/annotate.hpp"
#include "biomine/metrics.hpp"

namespace biomine {

namespace {

std::set<std::string> template_placeholders(const PromptTemplate& t) {
  return placeholders_in(t.system_text + "\n" + t.user_text + "\n" + t.reasoning_text + "\n" +
                         t.structurize_text);
}

DatasetSplit split_from(const std::vector<const AnnotatedDoc*>& docs,
                        const std::vector<ParsedAnnotation>* predictions) {
  DatasetSplit s;
  for (size_t i = 0; i < docs.size(); ++i) {
    if (predictions) {
      s.docs.push_back(to_annotated_doc(docs[i]->doc, (*predictions)[i]));
    } else {
      s.docs.push_back(*docs[i]);
    }
  }
  return s;
}

double task_metric(const TaskConfig& task, const DatasetSplit& pred, const DatasetSplit& gold) {
  switch (task.task) {
    case Task::kNer:
      return entity_f1(pred, gold).f1;
    case Task::kLabels:
      return macro_f1(pred, gold, MacroTask::kLabels, task.label_vocabulary).f1;
    case Task::kRe:
      return macro_f1(pred, gold, MacroTask::kRelations, task.relation_types,
                      task.typed_relations())
          .f1;
  }
  return 0.0;
}

std::string summarize_items(const AnnotatedDoc& d, const TaskConfig& task) {
  switch (task.task) {
    case Task::kLabels: {
      std::string out;
      for (const auto& l : d.labels) out += (out.empty() ? "" : ", ") + l;
      return out.empty() ? "(none)" : out;
    }
    case Task::kNer: {
      std::string out;
      for (const auto& m : d.mentions) {
        out += (out.empty() ? "" : ", ") + m.surface + " [" + m.entity_type + "]";
      }
      return out.empty() ? "(none)" : out;
    }
    case Task::kRe: {
      std::string out;
      for (const auto& r : d.relations) {
        out += (out.empty() ? "" : ", ") + ("(" + r.subject_id + ", " + r.object_id +
                                            (r.relation_type ? ", " + *r.relation_type : "") + ")");
      }
      return out.empty() ? "(none)" : out;
    }
  }
  return "";
}

// Parses a numbered list response into at most n items.
std::vector<std::string> parse_numbered_list(const std::string& text, int n) {
  std::vector<std::string> items;
  std::istringstream in(text);
  std::string line;
  std::string current;
  auto flush = [&] {
    std::string t = trim(current);
    if (!t.empty() && static_cast<int>(items.size()) < n) items.push_back(t);
    current.clear();
  };
  while (std::getline(in, line)) {
    std::string t = trim(line);
    size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    bool numbered = i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')' || t[i] == ':');
    if (numbered) {
      flush();
      current = trim(t.substr(i + 1));
    } else if (!t.empty()) {
      if (!current.empty()) current += " ";
      current += t;
    }
  }
  flush();
  if (items.empty()) {
    std::string whole = trim(text);
    if (!whole.empty()) items.push_back(whole);
  }
  if (static_cast<int>(items.size()) > n) items.resize(static_cast<size_t>(n));
  return items;
}

}  // namespace

double score_prompt(const CandidatePrompt& candidate, const std::vector<const AnnotatedDoc*>& batch,
                    Gateway& gateway, const TaskConfig& task, const PlanOptions& options,
                    std::vector<BatchResult>* results) {
  if (batch.empty()) throw Error("score_prompt: empty batch");
  std::vector<ParsedAnnotation> predictions(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const AnnotatedDoc& input = *batch[i];
    try {
      PromptPlan plan = plan_basic(input, candidate.tmpl, task, options);
      ExecutedPlan exec = execute_plan(plan, gateway, options);
      const std::string& text = exec.responses.back();
      switch (plan.parse_as) {
        case OutputContract::kTaggedText: {
          std::set<std::string> allowed(task.entity_types.begin(), task.entity_types.end());
          predictions[i] = parse_ner(input.doc, text, allowed);
          break;
        }
        case OutputContract::kTuples:
          predictions[i] =
              parse_re(text, std::nullopt, EntityCatalog::from_mentions(input.mentions));
          break;
        case OutputContract::kTriples:
          predictions[i] = parse_re(text, task.relation_types,
                                    EntityCatalog::from_mentions(input.mentions));
          break;
        case OutputContract::kJsonLabels:
          predictions[i] = parse_labels(text, task.label_vocabulary);
          break;
      }
    } catch (const Error& e) {
      predictions[i] = ParsedAnnotation{};
      predictions[i].warnings.push_back(std::string("score_prompt: model call failed: ") +
                                        e.what());
    }
  }
  DatasetSplit pred = split_from(batch, &predictions);
  DatasetSplit gold = split_from(batch, nullptr);
  if (results) {
    results->clear();
    for (size_t i = 0; i < batch.size(); ++i) {
      results->push_back({batch[i], predictions[i]});
    }
  }
  return task_metric(task, pred, gold);
}

std::vector<std::string> build_gradient(const CandidatePrompt& candidate,
                                        const std::vector<BatchResult>& batch_results,
                                        Gateway& gateway, const TaskConfig& task,
                                        const PlanOptions& options,
                                        const OptimizerConfig& config) {
  if (batch_results.empty()) return {};

  // Distribution gap: per-label frequency and mean items per document.
  std::map<std::string, int64_t> pred_freq, gold_freq;
  double pred_items = 0.0, gold_items = 0.0;
  auto count_items = [&](const AnnotatedDoc& d) -> double {
    switch (task.task) {
      case Task::kLabels: return static_cast<double>(d.labels.size());
      case Task::kNer: return static_cast<double>(d.mentions.size());
      case Task::kRe: return static_cast<double>(d.relations.size());
    }
    return 0.0;
  };
  for (const auto& r : batch_results) {
    AnnotatedDoc pred_doc = to_annotated_doc(r.gold->doc, r.predicted);
    pred_items += count_items(pred_doc);
    gold_items += count_items(*r.gold);
    auto add = [&](const AnnotatedDoc& d, std::map<std::string, int64_t>& freq) {
      for (const auto& l : d.labels) freq[l]++;
      for (const auto& m : d.mentions) freq[m.entity_type]++;
      for (const auto& rel : d.relations) freq[rel.relation_type.value_or("(untyped)")]++;
    };
    add(pred_doc, pred_freq);
    add(*r.gold, gold_freq);
  }
  const double n = static_cast<double>(batch_results.size());

  std::ostringstream stats;
  stats << "Mean items per document: predicted " << (pred_items / n) << ", gold "
        << (gold_items / n) << "\n";
  std::set<std::string> keys;
  for (const auto& [k, v] : pred_freq) keys.insert(k);
  for (const auto& [k, v] : gold_freq) keys.insert(k);
  for (const auto& k : keys) {
    stats << "- " << k << ": predicted " << pred_freq[k] << ", gold " << gold_freq[k] << "\n";
  }

  std::ostringstream errors;
  int shown = 0;
  for (const auto& r : batch_results) {
    if (shown >= config.error_samples) break;
    AnnotatedDoc pred_doc = to_annotated_doc(r.gold->doc, r.predicted);
    DatasetSplit p, g;
    p.docs.push_back(pred_doc);
    g.docs.push_back(*r.gold);
    if (task_metric(task, p, g) >= 1.0) continue;
    std::string snippet = r.gold->doc.full_text().substr(0, 240);
    errors << "Document: " << snippet << "\n";
    errors << "Predicted: " << summarize_items(pred_doc, task) << "\n";
    errors << "Expected: " << summarize_items(*r.gold, task) << "\n\n";
    shown++;
  }

  std::ostringstream prompt;
  prompt << "A prompt used to annotate biomedical text is underperforming. Critique it.\n\n";
  prompt << "Current instruction text:\n---\n" << candidate.tmpl.system_text << "\n---\n\n";
  prompt << "Distribution of outputs on a scoring batch versus the expected labels:\n"
         << stats.str() << "\n";
  if (shown > 0) {
    prompt << "Concrete mistakes:\n" << errors.str();
  }
  prompt << "Write " << config.gradients_per_iteration
         << " distinct, specific critiques of the instruction text, each one sentence, as a "
            "numbered list. Focus on what the instructions make the model over- or "
            "under-predict.";

  ChatRequest req;
  req.model = options.model;
  req.temperature = options.temperature;
  req.messages.push_back({"system", "You diagnose weaknesses in annotation prompts."});
  req.messages.push_back({"user", prompt.str()});
  try {
    ChatResponse resp = gateway.complete(req);
    return parse_numbered_list(resp.content, config.gradients_per_iteration);
  } catch (const Error&) {
    return {};
  }
}

std::optional<CandidatePrompt> apply_gradient(const CandidatePrompt& candidate,
                                              const std::string& gradient_text, Gateway& gateway,
                                              const TaskConfig&, const PlanOptions& options,
                                              int iteration, int index,
                                              std::vector<std::string>* warnings) {
  if (trim(gradient_text).empty()) return std::nullopt;
  std::ostringstream prompt;
  prompt << "Rewrite the instruction text below to address this critique, moving its behavior "
            "the opposite way:\n";
  prompt << "Critique: " << gradient_text << "\n\n";
  prompt << "Instruction text:\n---\n" << candidate.tmpl.system_text << "\n---\n\n";
  prompt << "Keep every {placeholder} token that appears in the original. Output only the new "
            "instruction text.";

  ChatRequest req;
  req.model = options.model;
  req.temperature = options.temperature;
  req.messages.push_back({"system", "You rewrite annotation prompts."});
  req.messages.push_back({"user", prompt.str()});
  ChatResponse resp;
  try {
    resp = gateway.complete(req);
  } catch (const Error& e) {
    if (warnings) warnings->push_back(std::string("apply_gradient: rewrite failed: ") + e.what());
    return std::nullopt;
  }

  CandidatePrompt next = candidate;
  next.tmpl.system_text = trim(resp.content);
  next.tmpl.template_id =
      candidate.tmpl.template_id + "-i" + std::to_string(iteration) + "g" + std::to_string(index);
  next.score.reset();
  next.lineage.push_back({iteration, gradient_text});

  auto before = template_placeholders(candidate.tmpl);
  auto after = template_placeholders(next.tmpl);
  if (before != after) {
    if (warnings) {
      warnings->push_back("apply_gradient: rewrite changed placeholder set; candidate rejected");
    }
    return std::nullopt;
  }
  return next;
}

namespace {

// Deterministic partial Fisher-Yates; std::sample's output order is not
// pinned by the standard, this is.
std::vector<const AnnotatedDoc*> sample_batch(const DatasetSplit& pool, int batch_size,
                                              std::mt19937_64& rng) {
  std::vector<size_t> idx(pool.docs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const size_t take = std::min(static_cast<size_t>(batch_size), idx.size());
  for (size_t i = 0; i < take; ++i) {
    size_t j = i + static_cast<size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<const AnnotatedDoc*> batch;
  batch.reserve(take);
  for (size_t i = 0; i < take; ++i) batch.push_back(&pool.docs[idx[i]]);
  return batch;
}

void sort_beam(std::vector<CandidatePrompt>& beam) {
  std::sort(beam.begin(), beam.end(), [](const CandidatePrompt& a, const CandidatePrompt& b) {
    double sa = a.score.value_or(-1.0);
    double sb = b.score.value_or(-1.0);
    if (sa != sb) return sa > sb;
    return a.tmpl.template_id < b.tmpl.template_id;
  });
}

}  // namespace

OptimizeResult optimize(const PromptTemplate& seed, const DatasetSplit& train_pool,
                        const OptimizerConfig& config, Gateway& gateway, const TaskConfig& task,
                        const PlanOptions& options) {
  if (config.batch_size < 1 || config.beam_width < 1 || config.gradients_per_iteration < 1 ||
      config.iterations < 0) {
    throw Error("optimize: config values must be positive");
  }
  if (train_pool.docs.size() < static_cast<size_t>(config.batch_size)) {
    throw Error("optimize: train pool of " + std::to_string(train_pool.docs.size()) +
                " documents is smaller than batch_size " + std::to_string(config.batch_size));
  }

  OptimizeResult result;
  std::mt19937_64 rng(config.seed);

  CandidatePrompt seed_candidate;
  seed_candidate.tmpl = seed;

  std::vector<CandidatePrompt> beam{seed_candidate};
  std::map<std::string, std::vector<BatchResult>> batch_results_by_id;
  std::optional<CandidatePrompt> scored_seed;

  auto score_candidate = [&](CandidatePrompt& c, int iteration,
                             const std::vector<const AnnotatedDoc*>& batch,
                             const std::string& gradient, const std::string& parent) {
    std::vector<BatchResult> results;
    c.score = score_prompt(c, batch, gateway, task, options, &results);
    batch_results_by_id[c.tmpl.template_id] = std::move(results);
    result.scored_candidates++;
    result.log.push_back({iteration, c.tmpl.template_id, *c.score, gradient, parent});
    if (c.tmpl.template_id == seed.template_id) scored_seed = c;
  };

  if (config.iterations == 0) {
    auto batch = sample_batch(train_pool, config.batch_size, rng);
    score_candidate(beam[0], 0, batch, "", "");
    sort_beam(beam);
    result.beam = std::move(beam);
    return result;
  }

  for (int iteration = 1; iteration <= config.iterations; ++iteration) {
    auto batch = sample_batch(train_pool, config.batch_size, rng);

    for (auto& c : beam) {
      if (!c.score) score_candidate(c, iteration, batch, "", "");
    }

    std::vector<CandidatePrompt> expansions;
    for (const auto& c : beam) {
      auto gradients = build_gradient(c, batch_results_by_id[c.tmpl.template_id], gateway, task,
                                      options, config);
      int index = 0;
      for (const auto& g : gradients) {
        auto next = apply_gradient(c, g, gateway, task, options, iteration, index++, nullptr);
        if (!next) continue;
        score_candidate(*next, iteration, batch, g, c.tmpl.template_id);
        expansions.push_back(std::move(*next));
      }
    }

    // Selection pool: survivors, expansions, and always the seed.
    std::vector<CandidatePrompt> pool = beam;
    for (auto& e : expansions) pool.push_back(std::move(e));
    bool seed_present = std::any_of(pool.begin(), pool.end(), [&](const CandidatePrompt& c) {
      return c.tmpl.template_id == seed.template_id;
    });
    if (!seed_present && scored_seed) pool.push_back(*scored_seed);
    sort_beam(pool);
    if (pool.size() > static_cast<size_t>(config.beam_width)) {
      pool.resize(static_cast<size_t>(config.beam_width));
    }
    beam = std::move(pool);
  }

  sort_beam(beam);
  result.beam = std::move(beam);
  return result;
}

std::string optimize_log_to_json(const OptimizeLogEntry& entry) {
  nlohmann::ordered_json j;
  j["iteration"] = entry.iteration;
  j["template_id"] = entry.template_id;
  j["score"] = entry.score;
  j["gradient_text"] = entry.gradient_text;
  j["parent"] = entry.parent;
  return j.dump();
}

}  // namespace biomine
