#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "tabx/blackbox.hpp"
#include "tabx/dataset.hpp"
#include "tabx/encoding.hpp"
#include "tabx/error.hpp"
#include "tabx/graph_export.hpp"
#include "tabx/learning.hpp"
#include "tabx/metrics.hpp"
#include "tabx/parallel.hpp"
#include "tabx/pgm.hpp"
#include "tabx/random.hpp"
#include "tabx/schema.hpp"
#include "tabx/shapley.hpp"
#include "tabx/synthetic.hpp"
#include "tabx/tuner.hpp"

namespace tabx::cli {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Substreams of --seed, one per consumer.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kFitStream = 2;
constexpr std::uint64_t kBackgroundStream = 3;
constexpr std::uint64_t kShapleyStream = 4;

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string report;
  bool timing = false;
};

struct RunReport {
  std::vector<std::string> command;
  Json config = Json::object();
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker thread cap (0 = all cores)")
      ->capture_default_str();
  app->add_option("--report", c.report, "Write a JSON run report here");
  app->add_flag("--timing", c.timing, "Include wall-clock time in the run report");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

// Refuses outputs that would overwrite one of the inputs.
void guard_inputs(const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  for (const auto& o : outputs) {
    if (o.empty()) continue;
    for (const auto& i : inputs) {
      if (i.empty()) continue;
      std::error_code ec;
      if (fs::weakly_canonical(o, ec) == fs::weakly_canonical(i, ec))
        throw ConfigError("output '" + o + "' would overwrite input '" + i + "'");
    }
  }
}

std::shared_ptr<const FeatureSchema> read_schema(const std::string& path) {
  return std::make_shared<const FeatureSchema>(load_schema(path));
}

EncoderMode encoder_mode(const std::string& text) {
  auto m = parse_encoder_mode(text);
  if (!m) throw ConfigError("unknown encoding '" + text + "' (hybrid, onehot, label)");
  return *m;
}

ModelKind model_kind(const std::string& text) {
  auto k = parse_model_kind(text);
  if (!k) throw ConfigError("unknown model '" + text + "' (rf, tree, knn)");
  return *k;
}

IntRange parse_range(const std::string& text, IntRange fallback) {
  if (text.empty()) return fallback;
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("range '" + text + "' is not lo:hi");
  try {
    return {std::stoll(text.substr(0, colon)), std::stoll(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("range '" + text + "' is not lo:hi");
  }
}

Json range_json(IntRange r) { return Json::array({r.lo, r.hi}); }

// --- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::size_t n = 0;
  std::string preset = "default";
  std::string out, schema_out, truth_out;
  std::size_t bayes_samples = 100000;
};

void run_gen(const GenArgs& a, const Common& c, RunReport& report, std::ostream& out) {
  auto spec = make_preset(a.preset, c.seed);
  auto [data, truth] = generate(spec, a.n, a.bayes_samples);
  std::ostringstream csv;
  write_csv(csv, data);
  write_text(a.out, csv.str());
  report.outputs.push_back(a.out);
  write_text(a.schema_out, serialize_schema(data.schema()));
  report.outputs.push_back(a.schema_out);
  if (!a.truth_out.empty()) {
    write_text(a.truth_out, json_text(ground_truth_to_json(truth)));
    report.outputs.push_back(a.truth_out);
  }
  report.config = {{"n", a.n},
                   {"preset", a.preset},
                   {"bayes_samples", a.bayes_samples},
                   {"out", a.out},
                   {"schema_out", a.schema_out},
                   {"truth_out", a.truth_out}};
  out << fmt::format("generated {} rows ({} positive), bayes rate {:.4f}\n", data.rows(),
                     data.count_positive(), truth.bayes.rate);
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string model = "rf";
  std::string data, schema, encoding = "hybrid", out, metrics_out;
  ModelParams params;
  bool no_bootstrap = false;
  double test_frac = 0;
};

void run_train(TrainArgs a, const Common& c, RunReport& report, std::ostream& out) {
  guard_inputs({a.data, a.schema}, {a.out, a.metrics_out});
  const auto kind = model_kind(a.model);
  const auto mode = encoder_mode(a.encoding);
  a.params.bootstrap = !a.no_bootstrap;
  auto schema = read_schema(a.schema);
  const Dataset data = load_csv(a.data, schema);

  std::optional<Dataset> test;
  Dataset train = data;
  if (a.test_frac > 0) {
    auto [tr, te] = split_stratified(data, a.test_frac, derive_seed(c.seed, kSplitStream));
    train = std::move(tr);
    test = std::move(te);
  }
  auto encoder = FittedEncoder::fit(schema, mode);
  const auto x = encoder.transform(train);
  auto model = fit_model(kind, a.params, x, train.targets(), derive_seed(c.seed, kFitStream));

  Json metrics;
  const auto train_metrics = evaluate(model, x.values, train.targets());
  metrics["train"] = metrics_to_json(train_metrics);
  metrics["train_rows"] = train.rows();
  if (test) {
    const auto m = evaluate(model, encoder.transform(*test).values, test->targets());
    metrics["test"] = metrics_to_json(m);
    metrics["test_rows"] = test->rows();
    out << fmt::format("test accuracy {:.4f}  precision {:.4f}  recall {:.4f}  f1 {:.4f}\n",
                       m.accuracy, m.precision, m.recall, m.f1);
  } else {
    out << fmt::format("train accuracy {:.4f}\n", train_metrics.accuracy);
  }

  Pipeline(std::move(encoder), std::move(model)).save(a.out);
  report.outputs.push_back(a.out);
  if (!a.metrics_out.empty()) {
    write_text(a.metrics_out, json_text(metrics));
    report.outputs.push_back(a.metrics_out);
  }
  report.config = {{"model", to_string(kind)},
                   {"data", a.data},
                   {"schema", a.schema},
                   {"encoding", to_string(mode)},
                   {"params", params_to_json(kind, a.params)},
                   {"test_frac", a.test_frac},
                   {"out", a.out},
                   {"metrics_out", a.metrics_out}};
}

// --- tune -------------------------------------------------------------------

struct TuneArgs {
  std::string model = "rf";
  std::string data, schema, encoding = "hybrid", out, model_out;
  std::size_t rounds = 30, folds = 5;
  std::vector<std::size_t> rescreen;
  std::string n_trees_range, max_depth_range, min_leaf_range, k_range;
};

void run_tune(const TuneArgs& a, const Common& c, RunReport& report, std::ostream& out) {
  guard_inputs({a.data, a.schema}, {a.out, a.model_out});
  const auto kind = model_kind(a.model);
  const auto mode = encoder_mode(a.encoding);
  auto schema = read_schema(a.schema);
  const Dataset data = load_csv(a.data, schema);

  TunerConfig cfg;
  cfg.rounds = a.rounds;
  cfg.folds = a.folds;
  cfg.seed = c.seed;
  cfg.rescreen_folds = a.rescreen;
  cfg.space.n_trees = parse_range(a.n_trees_range, cfg.space.n_trees);
  cfg.space.max_depth = parse_range(a.max_depth_range, cfg.space.max_depth);
  cfg.space.min_leaf = parse_range(a.min_leaf_range, cfg.space.min_leaf);
  cfg.space.k = parse_range(a.k_range, cfg.space.k);

  const auto result = random_search(kind, data, mode, cfg);
  for (const auto& t : result.trials) {
    if (t.failed) report.warnings.push_back(fmt::format("trial {} failed: {}", t.index, t.error));
  }
  write_text(a.out, json_text(tune_report_to_json(result)));
  report.outputs.push_back(a.out);
  if (!a.model_out.empty()) {
    auto encoder = FittedEncoder::fit(schema, mode);
    auto model = fit_model(kind, result.best, encoder.transform(data), data.targets(),
                           derive_seed(c.seed, kFitStream));
    Pipeline(std::move(encoder), std::move(model)).save(a.model_out);
    report.outputs.push_back(a.model_out);
  }
  out << fmt::format("best trial {} cv accuracy {:.4f}", result.best_index, result.best_score);
  if (result.fold_settings.size() > 1)
    out << fmt::format(", combined over fold settings {:.4f}", result.combined_accuracy);
  out << '\n';
  report.config = {{"model", to_string(kind)},
                   {"data", a.data},
                   {"schema", a.schema},
                   {"encoding", to_string(mode)},
                   {"rounds", a.rounds},
                   {"folds", a.folds},
                   {"rescreen", a.rescreen},
                   {"space",
                    {{"n_trees", range_json(cfg.space.n_trees)},
                     {"max_depth", range_json(cfg.space.max_depth)},
                     {"min_leaf", range_json(cfg.space.min_leaf)},
                     {"k", range_json(cfg.space.k)}}},
                   {"out", a.out},
                   {"model_out", a.model_out}};
}

// --- evaluate ---------------------------------------------------------------

struct EvalArgs {
  std::string model_file, data, out;
};

void run_evaluate(const EvalArgs& a, RunReport& report, std::ostream& out) {
  guard_inputs({a.model_file, a.data}, {a.out});
  const auto pipe = Pipeline::load(a.model_file);
  const Dataset data = load_csv(a.data, pipe.encoder().schema_ptr());
  const auto m = evaluate(pipe.model(), pipe.encoder().transform(data).values, data.targets());
  Json j = metrics_to_json(m);
  j["rows"] = data.rows();
  if (!a.out.empty()) {
    write_text(a.out, json_text(j));
    report.outputs.push_back(a.out);
  }
  out << fmt::format("accuracy {:.4f}  precision {:.4f}  recall {:.4f}  f1 {:.4f}\n", m.accuracy,
                     m.precision, m.recall, m.f1);
  report.config = {{"model_file", a.model_file}, {"data", a.data}, {"out", a.out}};
}

// --- explain shap -----------------------------------------------------------

struct ShapArgs {
  std::string model_file, data, out_csv, out_ranking;
  std::string mode = "auto";
  std::size_t background = 32, instances = 50, permutations = 64, max_width = 15, top_k = 20;
};

void run_shap(const ShapArgs& a, const Common& c, RunReport& report, std::ostream& out) {
  guard_inputs({a.model_file, a.data}, {a.out_csv, a.out_ranking});
  auto mode = parse_shapley_mode(a.mode);
  if (!mode) throw ConfigError("unknown shapley mode '" + a.mode + "' (auto, exact, sampled)");
  const auto pipe = Pipeline::load(a.model_file);
  const Dataset data = load_csv(a.data, pipe.encoder().schema_ptr());
  if (data.empty()) throw DataError("'" + a.data + "' has no rows");
  const auto background = sample_background(data, a.background, derive_seed(c.seed, kBackgroundStream));

  std::vector<std::size_t> rows(std::min(a.instances, data.rows()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  if (rows.size() < a.instances)
    report.warnings.push_back(fmt::format("only {} instances available", rows.size()));
  const Dataset explained = data.subset(rows);

  GlobalOptions opts;
  opts.mode = *mode;
  opts.max_width = a.max_width;
  opts.permutations = a.permutations;
  opts.top_k = a.top_k;
  opts.seed = derive_seed(c.seed, kShapleyStream);
  const auto summary = global_summary(pipe, explained, background, opts);

  if (!a.out_csv.empty()) {
    std::ostringstream csv;
    write_attribution_csv(csv, summary, explained);
    write_text(a.out_csv, csv.str());
    report.outputs.push_back(a.out_csv);
  }
  if (!a.out_ranking.empty()) {
    write_text(a.out_ranking, json_text(ranking_to_json(summary)));
    report.outputs.push_back(a.out_ranking);
  }
  for (const auto& f : summary.top()) out << fmt::format("{:.6f}  {}\n", f.importance, f.feature);
  report.config = {{"model_file", a.model_file},
                   {"data", a.data},
                   {"mode", to_string(*mode)},
                   {"background", a.background},
                   {"instances", rows.size()},
                   {"permutations", a.permutations},
                   {"max_width", a.max_width},
                   {"top_k", a.top_k},
                   {"out_csv", a.out_csv},
                   {"out_ranking", a.out_ranking}};
}

// --- explain pgm ------------------------------------------------------------

struct PgmArgs {
  std::string model_file, data, out_dot, out_json, cohort;
  std::string mode = "features", change = "label";
  PgmConfig cfg;
};

void run_pgm(PgmArgs a, const Common& c, RunReport& report, std::ostream& out) {
  guard_inputs({a.model_file, a.data}, {a.out_dot, a.out_json});
  auto mode = parse_node_mode(a.mode);
  if (!mode) throw ConfigError("unknown node mode '" + a.mode + "' (features, groups)");
  auto change = parse_change_rule(a.change);
  if (!change) throw ConfigError("unknown change rule '" + a.change + "' (label, prob)");
  a.cfg.mode = *mode;
  a.cfg.change = *change;
  a.cfg.seed = c.seed;
  a.cfg.validate();

  const auto pipe = Pipeline::load(a.model_file);
  const Dataset data = load_csv(a.data, pipe.encoder().schema_ptr());
  const auto graph = a.cohort.empty() ? explain(pipe, data, a.cfg)
                                      : cohort_explain(pipe, data, parse_cohort(a.cohort), a.cfg);
  if (!a.out_dot.empty()) {
    write_text(a.out_dot, to_dot(graph));
    report.outputs.push_back(a.out_dot);
  }
  if (!a.out_json.empty()) {
    write_text(a.out_json, json_text(graph_to_json(graph)));
    report.outputs.push_back(a.out_json);
  }
  std::vector<const GraphNode*> order;
  for (const auto& n : graph.nodes) order.push_back(&n);
  std::stable_sort(order.begin(), order.end(),
                   [](const GraphNode* x, const GraphNode* y) { return x->weight > y->weight; });
  std::size_t selected = 0;
  for (const auto* n : order) {
    if (!n->selected) continue;
    ++selected;
    out << fmt::format("{:.4f}  p={:.3g}  {}\n", n->weight, n->p_value, n->name);
  }
  out << fmt::format("{} of {} nodes selected ({} rows)\n", selected, graph.nodes.size(),
                     graph.rows);
  report.config = pgm_config_to_json(a.cfg);
  report.config["model_file"] = a.model_file;
  report.config["data"] = a.data;
  report.config["cohort"] = a.cohort;
  report.config["out_dot"] = a.out_dot;
  report.config["out_json"] = a.out_json;
}

// The echo leaves out --threads so reports match across thread caps.
std::vector<std::string> command_echo(const std::vector<std::string>& args) {
  std::vector<std::string> echo{"tabx"};
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--threads") {
      ++i;
      continue;
    }
    if (args[i].rfind("--threads=", 0) == 0) continue;
    echo.push_back(args[i]);
  }
  return echo;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const DataError*>(&e) ||
      dynamic_cast<const IoError*>(&e) || dynamic_cast<const QueryError*>(&e) ||
      dynamic_cast<const CohortError*>(&e))
    return kDataError;
  return kNumericError;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tabular classifiers with Shapley and PGM explanations", "tabx"};
  app.require_subcommand(1);
  Common common;

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic survey dataset");
  gen_cmd->add_option("--n", gen.n, "Rows to generate")->required();
  gen_cmd->add_option("--preset", gen.preset, "default, planted, nominal-heavy, group-only")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "CSV output")->required();
  gen_cmd->add_option("--schema-out", gen.schema_out, "Schema output")->required();
  gen_cmd->add_option("--truth-out", gen.truth_out, "Ground-truth JSON output");
  gen_cmd->add_option("--bayes-samples", gen.bayes_samples, "Monte-Carlo rows for the Bayes rate")
      ->capture_default_str();
  add_common(gen_cmd, common);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fit an encoder and classifier");
  train_cmd->add_option("--model", train.model, "rf, tree or knn")->capture_default_str();
  train_cmd->add_option("--data", train.data, "Training CSV")->required();
  train_cmd->add_option("--schema", train.schema, "Schema document")->required();
  train_cmd->add_option("--encoding", train.encoding, "hybrid, onehot or label")
      ->capture_default_str();
  train_cmd->add_option("--out", train.out, "Model file output")->required();
  train_cmd->add_option("--metrics-out", train.metrics_out, "Metrics JSON output");
  train_cmd->add_option("--test-frac", train.test_frac, "Stratified hold-out fraction")
      ->capture_default_str();
  train_cmd->add_option("--n-trees", train.params.n_trees)->capture_default_str();
  train_cmd->add_option("--max-depth", train.params.max_depth)->capture_default_str();
  train_cmd->add_option("--min-leaf", train.params.min_leaf)->capture_default_str();
  train_cmd->add_option("--max-features", train.params.max_features, "0 = sqrt(columns)")
      ->capture_default_str();
  train_cmd->add_flag("--no-bootstrap", train.no_bootstrap);
  train_cmd->add_option("--k", train.params.k, "Neighbours for knn")->capture_default_str();
  add_common(train_cmd, common);

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "Random hyperparameter search with stratified CV");
  tune_cmd->add_option("--model", tune.model, "rf, tree or knn")->capture_default_str();
  tune_cmd->add_option("--data", tune.data)->required();
  tune_cmd->add_option("--schema", tune.schema)->required();
  tune_cmd->add_option("--encoding", tune.encoding)->capture_default_str();
  tune_cmd->add_option("--rounds", tune.rounds)->capture_default_str();
  tune_cmd->add_option("--folds", tune.folds)->capture_default_str();
  tune_cmd->add_option("--rescreen", tune.rescreen, "Extra fold counts, e.g. 10,15")
      ->delimiter(',');
  tune_cmd->add_option("--n-trees-range", tune.n_trees_range, "lo:hi");
  tune_cmd->add_option("--max-depth-range", tune.max_depth_range, "lo:hi");
  tune_cmd->add_option("--min-leaf-range", tune.min_leaf_range, "lo:hi");
  tune_cmd->add_option("--k-range", tune.k_range, "lo:hi");
  tune_cmd->add_option("--out", tune.out, "Tuning report JSON")->required();
  tune_cmd->add_option("--model-out", tune.model_out, "Refit the best configuration and save it");
  add_common(tune_cmd, common);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a saved model on labelled data");
  eval_cmd->add_option("--model-file", eval.model_file)->required();
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--out", eval.out, "Metrics JSON output");
  add_common(eval_cmd, common);

  auto* explain_cmd = app.add_subcommand("explain", "Explain a saved model");
  explain_cmd->require_subcommand(1);

  ShapArgs shap;
  auto* shap_cmd = explain_cmd->add_subcommand("shap", "Shapley attributions");
  shap_cmd->add_option("--model-file", shap.model_file)->required();
  shap_cmd->add_option("--data", shap.data)->required();
  shap_cmd->add_option("--mode", shap.mode, "auto, exact or sampled")->capture_default_str();
  shap_cmd->add_option("--background", shap.background)->capture_default_str();
  shap_cmd->add_option("--instances", shap.instances, "Explain the first N rows")
      ->capture_default_str();
  shap_cmd->add_option("--permutations", shap.permutations)->capture_default_str();
  shap_cmd->add_option("--max-width", shap.max_width, "Widest exact enumeration")
      ->capture_default_str();
  shap_cmd->add_option("--top-k", shap.top_k)->capture_default_str();
  shap_cmd->add_option("--out-csv", shap.out_csv, "Per-instance attributions");
  shap_cmd->add_option("--out-ranking", shap.out_ranking, "Global ranking JSON");
  add_common(shap_cmd, common);

  PgmArgs pgm;
  auto* pgm_cmd = explain_cmd->add_subcommand("pgm", "Perturbation dependency graph");
  pgm_cmd->add_option("--model-file", pgm.model_file)->required();
  pgm_cmd->add_option("--data", pgm.data)->required();
  pgm_cmd->add_option("--mode", pgm.mode, "features or groups")->capture_default_str();
  pgm_cmd->add_option("--runs", pgm.cfg.runs)->capture_default_str();
  pgm_cmd->add_option("--perturb-prob", pgm.cfg.perturb_prob)->capture_default_str();
  pgm_cmd->add_option("--samples", pgm.cfg.samples)->capture_default_str();
  pgm_cmd->add_option("--alpha", pgm.cfg.alpha)->capture_default_str();
  pgm_cmd->add_option("--change", pgm.change, "label or prob")->capture_default_str();
  pgm_cmd->add_option("--tau", pgm.cfg.tau, "Threshold for --change prob")
      ->capture_default_str();
  pgm_cmd->add_option("--first-run", pgm.cfg.first_run)->capture_default_str();
  pgm_cmd->add_option("--cohort", pgm.cohort, "feature=level");
  pgm_cmd->add_option("--min-cohort", pgm.cfg.min_cohort_rows)->capture_default_str();
  pgm_cmd->add_option("--out-dot", pgm.out_dot);
  pgm_cmd->add_option("--out-json", pgm.out_json);
  add_common(pgm_cmd, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.command = command_echo(args);
  try {
    if (common.threads > 0) set_max_threads(common.threads);
    if (gen_cmd->parsed()) {
      run_gen(gen, common, report, out);
    } else if (train_cmd->parsed()) {
      run_train(train, common, report, out);
    } else if (tune_cmd->parsed()) {
      run_tune(tune, common, report, out);
    } else if (eval_cmd->parsed()) {
      run_evaluate(eval, report, out);
    } else if (shap_cmd->parsed()) {
      run_shap(shap, common, report, out);
    } else if (pgm_cmd->parsed()) {
      run_pgm(pgm, common, report, out);
    }
    if (!common.report.empty()) {
      Json j;
      j["command"] = report.command;
      j["config"] = report.config;
      j["seed"] = common.seed;
      if (common.timing)
        j["timing_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      report.outputs.push_back(common.report);
      j["outputs"] = report.outputs;
      j["warnings"] = report.warnings;
      write_text(common.report, json_text(j));
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  }
  return kOk;
}

}  // namespace tabx::cli
