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

#include "biomine/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "biomine/annotate.hpp"
#include "biomine/distill.hpp"
#include "biomine/eutils.hpp"
#include "biomine/metrics.hpp"
#include "biomine/optimizer.hpp"

namespace biomine::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

struct GatewayBundle {
  std::shared_ptr<ReplayStore> store;
  std::shared_ptr<Backend> backend;
  std::unique_ptr<Gateway> gateway;
  ReplayMode mode = ReplayMode::kRecord;
};

GatewayBundle make_gateway(const RunConfig& config) {
  GatewayBundle bundle;
  auto mode = replay_mode_from_string(config.get_or("replay_mode", "record"));
  if (!mode) throw Error("run config: replay_mode must be record|replay|strict-replay");
  bundle.mode = *mode;

  if (auto store_path = config.get("replay_store")) {
    bundle.store = std::make_shared<ReplayStore>(*store_path);
  } else if (bundle.mode == ReplayMode::kStrictReplay) {
    throw Error("run config: strict-replay requires replay_store");
  }

  if (bundle.mode == ReplayMode::kStrictReplay) {
    bundle.backend = make_fail_backend();
  } else {
    HttpBackendConfig http;
    http.base_url = config.require("base_url");
    http.chat_path = config.get_or("chat_path", http.chat_path);
    http.embed_path = config.get_or("embed_path", http.embed_path);
    http.auth_env = config.get_or("auth_env", http.auth_env);
    http.retry.max_retries = static_cast<int>(config.get_int("max_retries", 4));
    http.retry.initial_delay =
        std::chrono::milliseconds(config.get_int("retry_initial_delay_ms", 500));
    http.retry.max_delay = std::chrono::milliseconds(config.get_int("retry_max_delay_ms", 8000));
    bundle.backend = make_http_backend(http);
  }

  GatewayConfig gc;
  gc.max_concurrency = static_cast<int>(config.get_int("parallel", 4));
  gc.mode = bundle.mode;
  bundle.gateway = std::make_unique<Gateway>(bundle.backend, bundle.store, gc);
  return bundle;
}

PlanOptions make_plan_options(const RunConfig& config) {
  PlanOptions plan;
  plan.model = config.get_or("model", "gpt-4o-2024-08-06");
  plan.embed_model = config.get_or("embed_model", "text-embedding-3-small");
  plan.temperature = config.get_double("temperature", 0.0);
  plan.fewshot_k = static_cast<int>(config.get_int("k", 3));
  if (auto v = config.get("reasoning_max_tokens")) {
    plan.reasoning_max_tokens = static_cast<int>(std::stoll(*v));
  }
  return plan;
}

DatasetSplit load_split_any(const std::string& path, Task task, const TaskConfig& tc,
                            const std::string& format_hint) {
  std::string format = format_hint;
  if (format.empty()) {
    if (path.ends_with(".jsonl") || path.ends_with(".json")) format = "json-lines";
    else format = task == Task::kLabels ? "json-lines" : "pubtator";
  }
  if (format == "pubtator") return load_pubtator(path, task);
  if (format == "json-lines") {
    if (task == Task::kLabels) return load_label_corpus(path, tc.label_vocabulary);
    return load_json_lines(path);
  }
  throw Error("unknown split format: " + format);
}

struct AnnotateSetup {
  TaskConfig task;
  TemplateSet templates;
  AnnotatorConfig annotator_config;
  DatasetSplit input;
  std::optional<VectorIndex> index;
  std::optional<GuidelineStore> store;
  std::optional<EmbeddingCache> cache;
};

AnnotateSetup prepare_annotate(const RunConfig& config, Gateway& gateway) {
  AnnotateSetup setup;
  setup.task = load_task_config(config.require("task_config"));
  setup.templates = TemplateSet::load(config.require("templates_dir"));

  auto strategy = strategy_from_string(config.get_or("strategy", "basic"));
  if (!strategy) throw Error("run config: unknown strategy " + config.get_or("strategy", ""));
  setup.annotator_config.strategy = *strategy;
  setup.annotator_config.plan = make_plan_options(config);
  setup.annotator_config.two_step_as_schema = config.get_bool("two_step_as_schema", true);
  setup.annotator_config.inline_threshold =
      static_cast<size_t>(config.get_int("inline_threshold", 2500));

  // Strategy/task compatibility before any model traffic.
  const bool wants_guideline = *strategy == Strategy::kFewshotGuideline ||
                               *strategy == Strategy::kTwoStepGuideline ||
                               *strategy == Strategy::kInlineGuideline;
  if (wants_guideline) {
    if (setup.task.task == Task::kLabels) {
      throw Error("strategy " + std::string(strategy_name(*strategy)) +
                  " is not defined for classification datasets");
    }
    setup.store = GuidelineStore::load(config.require("guideline_dir"));
    setup.store->check(setup.task.task == Task::kRe &&
                       *strategy != Strategy::kInlineGuideline);
    if (*strategy == Strategy::kInlineGuideline &&
        setup.store->total_body_length() > setup.annotator_config.inline_threshold) {
      throw Error("inline-guideline: store body of " +
                  std::to_string(setup.store->total_body_length()) + " bytes exceeds threshold " +
                  std::to_string(setup.annotator_config.inline_threshold));
    }
  }
  const bool wants_index =
      *strategy == Strategy::kFewshot || *strategy == Strategy::kFewshotGuideline;
  if (wants_index) {
    auto train = load_split_any(config.require("train_path"), setup.task.task, setup.task,
                                config.get_or("train_format", ""));
    if (auto cache_path = config.get("embedding_cache")) {
      setup.cache.emplace(*cache_path);
    }
    IndexBuildConfig ib;
    ib.task = setup.task.task;
    ib.label_vocabulary = setup.task.label_vocabulary;
    ib.embed_model = setup.annotator_config.plan.embed_model;
    setup.index = build_index(train, ib, gateway, setup.cache ? &*setup.cache : nullptr);
  }

  setup.input = load_split_any(config.require("input_path"), setup.task.task, setup.task,
                               config.get_or("input_format", ""));
  return setup;
}

std::string now_iso8601() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const RunConfig& config, const std::string& command,
                    const std::string& templates_dir, const std::string& path) {
  ordered_json j;
  j["command"] = command;
  j["config_hash"] = config.config_hash();
  j["model"] = config.get_or("model", "gpt-4o-2024-08-06");
  j["seed"] = config.get_int("seed", 0);
  j["strategy"] = config.get_or("strategy", "basic");
  j["replay_mode"] = config.get_or("replay_mode", "record");
  ordered_json cfg;
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = std::move(cfg);
  ordered_json hashes;
  if (fs::is_directory(templates_dir)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(templates_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".tmpl") {
        files.push_back(e.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      hashes[fs::path(f).filename().string()] = to_hex(fnv1a64(read_file(f)));
    }
  }
  j["template_hashes"] = std::move(hashes);
  write_file(path, j.dump(2) + "\n");
}

std::set<std::string> existing_prediction_ids(const std::string& path) {
  std::set<std::string> ids;
  std::ifstream in(path);
  if (!in) return ids;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.contains("doc_id")) ids.insert(j["doc_id"].get<std::string>());
  }
  return ids;
}

}  // namespace

int cmd_annotate(const RunConfig& config, std::ostream& out) {
  GatewayBundle bundle;
  std::optional<AnnotateSetup> setup;
  std::string output_dir;
  try {
    output_dir = config.require("output_dir");
    fs::create_directories(output_dir);
    bundle = make_gateway(config);
    setup = prepare_annotate(config, *bundle.gateway);
    write_manifest(config, "annotate", config.require("templates_dir"),
                   (fs::path(output_dir) / "manifest.json").string());
  } catch (const Error& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string pred_path = (fs::path(output_dir) / "predictions.jsonl").string();
  const std::string log_path = (fs::path(output_dir) / "run.log").string();
  std::set<std::string> done = existing_prediction_ids(pred_path);

  Annotator annotator(setup->task, setup->templates, *bundle.gateway, setup->annotator_config,
                      setup->index ? &*setup->index : nullptr,
                      setup->store ? &*setup->store : nullptr);

  std::ofstream pred_out(pred_path, std::ios::app);
  std::ofstream log_out(log_path, std::ios::app);
  if (!pred_out || !log_out) {
    out << "config error: cannot open output files under " << output_dir << "\n";
    return kExitConfig;
  }

  const int parallel = std::max<int>(1, static_cast<int>(config.get_int("parallel", 4)));
  const double failure_threshold = config.get_double("failure_threshold", 0.1);

  int64_t attempted = 0, failed = 0, skipped = 0;
  std::vector<const AnnotatedDoc*> todo;
  for (const auto& doc : setup->input.docs) {
    if (done.count(doc.doc.doc_id)) {
      skipped++;
      continue;
    }
    todo.push_back(&doc);
  }

  // Chunked fan-out with in-order writes: output is byte-stable for a given
  // config regardless of the parallelism level.
  for (size_t base = 0; base < todo.size(); base += static_cast<size_t>(parallel)) {
    const size_t chunk = std::min(static_cast<size_t>(parallel), todo.size() - base);
    std::vector<std::future<PredictionRecord>> futures;
    futures.reserve(chunk);
    for (size_t i = 0; i < chunk; ++i) {
      const AnnotatedDoc* doc = todo[base + i];
      futures.push_back(std::async(std::launch::async,
                                   [&annotator, doc] { return annotator.annotate(*doc); }));
    }
    for (size_t i = 0; i < chunk; ++i) {
      const AnnotatedDoc* doc = todo[base + i];
      attempted++;
      try {
        PredictionRecord rec = futures[i].get();
        pred_out << prediction_to_json(rec) << "\n";
        log_out << doc->doc.doc_id << "\tok\twarnings=" << rec.annotation.warnings.size() << "\n";
      } catch (const std::exception& e) {
        failed++;
        log_out << doc->doc.doc_id << "\tfailed\t" << e.what() << "\n";
      }
    }
    pred_out.flush();
    log_out.flush();
  }

  const auto& stats = bundle.gateway->stats();
  log_out << "# done attempted=" << attempted << " failed=" << failed << " skipped=" << skipped
          << " chat_calls=" << stats.chat_calls.load()
          << " replay_hits=" << stats.replay_hits.load()
          << " live_calls=" << stats.live_calls.load()
          << " prompt_tokens=" << stats.prompt_tokens.load()
          << " completion_tokens=" << stats.completion_tokens.load() << "\n";
  out << "annotate: " << attempted << " processed, " << failed << " failed, " << skipped
      << " resumed; predictions at " << pred_path << "\n";

  if (attempted > 0 &&
      static_cast<double>(failed) / static_cast<double>(attempted) > failure_threshold) {
    out << "failure rate above threshold " << failure_threshold << "\n";
    return kExitFailureRate;
  }
  return kExitOk;
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out) {
  TaskConfig task;
  DatasetSplit gold;
  std::vector<PredictionRecord> predictions;
  try {
    task = load_task_config(args.task_config_path);
    gold = load_split_any(args.gold_path, task.task, task, "");
    std::ifstream in(args.predictions_path);
    if (!in) throw Error("cannot open predictions: " + args.predictions_path);
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      predictions.push_back(prediction_from_json(line, args.predictions_path));
    }
    fs::create_directories(args.output_dir);
  } catch (const Error& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    std::set<std::string> gold_ids, pred_ids;
    for (const auto& d : gold.docs) gold_ids.insert(d.doc.doc_id);
    for (const auto& p : predictions) pred_ids.insert(p.doc_id);
    if (gold_ids != pred_ids) {
      std::string missing, extra;
      for (const auto& id : gold_ids) {
        if (!pred_ids.count(id)) missing += (missing.empty() ? "" : ", ") + id;
      }
      for (const auto& id : pred_ids) {
        if (!gold_ids.count(id)) extra += (extra.empty() ? "" : ", ") + id;
      }
      throw Error("doc_id mismatch; missing from predictions: [" + missing +
                  "], not in gold: [" + extra + "]");
    }

    DatasetSplit pred;
    std::map<std::string, const PredictionRecord*> by_id;
    for (const auto& p : predictions) by_id[p.doc_id] = &p;
    int64_t prompt_tokens = 0, completion_tokens = 0, warning_count = 0;
    for (const auto& gd : gold.docs) {
      const PredictionRecord* p = by_id[gd.doc.doc_id];
      pred.docs.push_back(to_annotated_doc(gd.doc, p->annotation));
      prompt_tokens += p->prompt_tokens;
      completion_tokens += p->completion_tokens;
      warning_count += static_cast<int64_t>(p->annotation.warnings.size());
    }

    EvalReport report;
    switch (task.task) {
      case Task::kNer: report = entity_f1(pred, gold); break;
      case Task::kRe:
        report = macro_f1(pred, gold, MacroTask::kRelations, task.relation_types,
                          task.typed_relations());
        break;
      case Task::kLabels:
        report = macro_f1(pred, gold, MacroTask::kLabels, task.label_vocabulary);
        break;
    }
    DiagnosticsConfig dc;
    dc.task = task.task;
    dc.category_order = task.category_order;
    report.diagnostics = diagnostics(pred, gold, dc);
    report.prompt_tokens = prompt_tokens;
    report.completion_tokens = completion_tokens;
    report.parse_warning_count = warning_count;

    write_file((fs::path(args.output_dir) / "report.json").string(), report_to_json(report));
    write_file((fs::path(args.output_dir) / "per_label.csv").string(), report_to_csv(report));
    out << "precision=" << report.precision << " recall=" << report.recall
        << " f1=" << report.f1 << " (report at " << args.output_dir << ")\n";
    return kExitOk;
  } catch (const Error& e) {
    out << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_optimize(const RunConfig& config, std::ostream& out) {
  GatewayBundle bundle;
  TaskConfig task;
  PromptTemplate seed_template;
  DatasetSplit pool;
  OptimizerConfig oc;
  std::string output_dir;
  try {
    output_dir = config.require("output_dir");
    fs::create_directories(output_dir);
    bundle = make_gateway(config);
    task = load_task_config(config.require("task_config"));
    seed_template = load_template(config.require("seed_template"));
    pool = load_split_any(config.require("train_path"), task.task, task,
                          config.get_or("train_format", ""));
    oc.batch_size = static_cast<int>(config.get_int("batch_size", 100));
    oc.gradients_per_iteration = static_cast<int>(config.get_int("gradients", 3));
    oc.beam_width = static_cast<int>(config.get_int("beam_width", 3));
    oc.iterations = static_cast<int>(config.get_int("iterations", 10));
    oc.seed = static_cast<uint64_t>(config.get_int("seed", 0));
  } catch (const Error& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    std::ofstream log_out((fs::path(output_dir) / "optimize.jsonl").string());
    ordered_json header;
    header["batch_size"] = oc.batch_size;
    header["gradients_per_iteration"] = oc.gradients_per_iteration;
    header["beam_width"] = oc.beam_width;
    header["iterations"] = oc.iterations;
    header["seed"] = oc.seed;
    header["metric"] = "macro-f1";
    header["dataset"] = task.dataset_id;
    header["scored_on"] = "gradient batch";
    log_out << header.dump() << "\n";

    OptimizeResult result =
        optimize(seed_template, pool, oc, *bundle.gateway, task, make_plan_options(config));
    for (const auto& entry : result.log) log_out << optimize_log_to_json(entry) << "\n";

    for (size_t i = 0; i < result.beam.size(); ++i) {
      const auto& c = result.beam[i];
      std::string path =
          (fs::path(output_dir) / ("best_" + std::to_string(i + 1) + ".tmpl")).string();
      write_file(path, render_template_file(c.tmpl));
      out << (i + 1) << ". " << c.tmpl.template_id << " score=" << c.score.value_or(0.0) << "\n";
    }
    out << "scored " << result.scored_candidates << " candidates; log at " << output_dir
        << "/optimize.jsonl\n";
    return kExitOk;
  } catch (const Error& e) {
    out << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_build_corpus(const RunConfig& config, std::ostream& out) {
  GatewayBundle bundle;
  std::string output_dir;
  std::unique_ptr<EutilsBackend> eutils;
  FetchQuery query;
  std::string kind;
  try {
    output_dir = config.require("output_dir");
    fs::create_directories(output_dir);
    bundle = make_gateway(config);
    kind = config.get_or("corpus_kind", "classification");
    if (kind != "classification" && kind != "re") {
      throw Error("corpus_kind must be classification|re");
    }
    if (auto dir = config.get("eutils_fixture_dir")) {
      eutils = make_eutils_fixture(*dir);
    } else {
      EutilsHttpConfig ec;
      ec.base_url = config.get_or("eutils_base_url", ec.base_url);
      eutils = make_eutils_http(ec);
    }
    query.term = config.require("fetch_term");
    query.date_floor = config.get_or("date_floor", "2024-04-01");
    query.max_results = static_cast<int>(config.get_int("max_results", 100));
  } catch (const Error& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    FetchStats fetch_stats;
    std::vector<Document> docs = fetch_articles(query, *eutils, &fetch_stats);
    out << "fetched " << docs.size() << " documents (skipped " << fetch_stats.skipped_no_abstract
        << " without abstract, " << fetch_stats.skipped_date << " before date floor)\n";

    Provenance prov;
    prov.config_hash = config.config_hash();
    prov.model_id = config.get_or("model", "gpt-4o-2024-08-06");
    prov.timestamp = now_iso8601();

    DistillStats stats;
    std::vector<SyntheticRecord> records;
    std::string export_format = config.get_or("export_format", "json-lines");
    SplitFormat fmt =
        export_format == "pubtator" ? SplitFormat::kPubtator : SplitFormat::kJsonLines;

    if (kind == "classification") {
      TaskConfig cls_task = load_task_config(config.require("task_config"));
      TemplateSet cls_templates = TemplateSet::load(config.require("templates_dir"));
      AnnotatorConfig ac;
      auto strategy = strategy_from_string(config.get_or("strategy", "two-step"));
      if (!strategy) throw Error("unknown strategy");
      ac.strategy = *strategy;
      ac.plan = make_plan_options(config);
      ac.two_step_as_schema = config.get_bool("two_step_as_schema", true);
      Annotator annotator(cls_task, cls_templates, *bundle.gateway, ac);
      records = build_classification_corpus(
          docs, annotator, static_cast<size_t>(config.get_int("target_size", 3000)), prov,
          &stats);
    } else {
      TaskConfig ner_task = load_task_config(config.require("ner_task_config"));
      TemplateSet ner_templates = TemplateSet::load(config.require("ner_templates_dir"));
      AnnotatorConfig ner_ac;
      auto ner_strategy = strategy_from_string(config.get_or("ner_strategy", "two-step"));
      if (!ner_strategy) throw Error("unknown ner_strategy");
      ner_ac.strategy = *ner_strategy;
      ner_ac.plan = make_plan_options(config);
      std::optional<GuidelineStore> ner_store;
      if (auto dir = config.get("ner_guideline_dir")) {
        ner_store = GuidelineStore::load(*dir);
      }
      Annotator ner_annotator(ner_task, ner_templates, *bundle.gateway, ner_ac, nullptr,
                              ner_store ? &*ner_store : nullptr);

      TaskConfig re_task = load_task_config(config.require("task_config"));
      TemplateSet re_templates = TemplateSet::load(config.require("templates_dir"));
      AnnotatorConfig re_ac;
      auto re_strategy = strategy_from_string(config.get_or("strategy", "two-step+guideline"));
      if (!re_strategy) throw Error("unknown strategy");
      re_ac.strategy = *re_strategy;
      re_ac.plan = make_plan_options(config);
      re_ac.inline_threshold = static_cast<size_t>(config.get_int("inline_threshold", 2500));
      std::optional<GuidelineStore> re_store;
      if (auto dir = config.get("guideline_dir")) {
        re_store = GuidelineStore::load(*dir);
      }
      Annotator re_annotator(re_task, re_templates, *bundle.gateway, re_ac, nullptr,
                             re_store ? &*re_store : nullptr);

      records = build_re_corpus(docs, ner_annotator, re_annotator,
                                config.get_double("negative_ratio", 2.0),
                                static_cast<uint64_t>(config.get_int("seed", 0)), prov, &stats);
    }

    std::string ext = fmt == SplitFormat::kPubtator ? ".pubtator" : ".jsonl";
    std::string corpus_path = (fs::path(output_dir) / ("corpus" + ext)).string();
    export_training_set(records, fmt, corpus_path);
    write_provenance(records, stats, (fs::path(output_dir) / "provenance.json").string());
    out << "corpus: " << records.size() << " records at " << corpus_path
        << " (dropped " << stats.dropped_no_positive << " without positive labels, "
        << stats.skipped_errors << " errors";
    if (kind == "re") {
      out << ", positives " << stats.positives << ", negatives " << stats.negatives;
    }
    out << ")\n";
    return kExitOk;
  } catch (const Error& e) {
    out << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_index(const RunConfig& config, std::ostream& out) {
  try {
    GatewayBundle bundle = make_gateway(config);
    TaskConfig task = load_task_config(config.require("task_config"));
    DatasetSplit split = load_split_any(config.require("train_path"), task.task, task,
                                        config.get_or("train_format", ""));
    EmbeddingCache cache(config.require("embedding_cache"));
    IndexBuildConfig ib;
    ib.task = task.task;
    ib.label_vocabulary = task.label_vocabulary;
    ib.embed_model = config.get_or("embed_model", "text-embedding-3-small");
    VectorIndex index = build_index(split, ib, *bundle.gateway, &cache);
    out << "indexed " << index.size() << " documents (dimension " << index.dimension
        << ") into " << config.require("embedding_cache") << "\n";
    return kExitOk;
  } catch (const Error& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace biomine::cli
