#include "tabx/tuner.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "tabx/error.hpp"
#include "tabx/metrics.hpp"
#include "tabx/parallel.hpp"

namespace tabx {
namespace {

constexpr std::uint64_t kFoldStream = 0xf01d;
constexpr std::uint64_t kFitStream = 0xf17;

EncodedMatrix take_rows(const EncodedMatrix& x, std::span<const std::size_t> rows) {
  EncodedMatrix out{Matrix(rows.size(), x.values.cols), x.provenance};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = x.values.row(rows[i]);
    std::copy(src.begin(), src.end(), out.values.row(i).begin());
  }
  return out;
}

void check_range(const IntRange& r, const char* name) {
  if (r.lo < 1 || r.hi < r.lo)
    throw ConfigError(fmt::format("search range for {} must satisfy 1 <= lo <= hi, got [{}, {}]",
                                  name, r.lo, r.hi));
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace

std::vector<std::vector<std::size_t>> kfold_indices(std::span<const std::uint8_t> y,
                                                    std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError(fmt::format("need at least 2 folds, got {}", k));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i] ? 1 : 0].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < k)
      throw DataError(fmt::format("class {} has {} rows, fewer than {} folds", c,
                                  by_class[c].size(), k));
  }
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i : idx) {
      folds[next].push_back(i);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

ModelParams sample_params(ModelKind kind, const SearchSpace& space, Rng& rng) {
  ModelParams p;
  switch (kind) {
    case ModelKind::forest:
      p.n_trees = static_cast<std::size_t>(rng.integer(space.n_trees.lo, space.n_trees.hi));
      [[fallthrough]];
    case ModelKind::tree:
      p.max_depth = static_cast<std::size_t>(rng.integer(space.max_depth.lo, space.max_depth.hi));
      p.min_leaf = static_cast<std::size_t>(rng.integer(space.min_leaf.lo, space.min_leaf.hi));
      break;
    case ModelKind::knn:
      p.k = static_cast<std::size_t>(rng.integer(space.k.lo, space.k.hi));
      break;
  }
  return p;
}

std::vector<double> cross_validate(ModelKind kind, const ModelParams& params,
                                   const EncodedMatrix& x, std::span<const std::uint8_t> y,
                                   const std::vector<std::vector<std::size_t>>& folds,
                                   std::uint64_t fit_seed) {
  std::vector<double> accuracy(folds.size());
  parallel_for(folds.size(), [&](std::size_t f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train.begin(), train.end());
    std::vector<std::uint8_t> y_train(train.size()), y_test(folds[f].size());
    for (std::size_t i = 0; i < train.size(); ++i) y_train[i] = y[train[i]];
    for (std::size_t i = 0; i < folds[f].size(); ++i) y_test[i] = y[folds[f][i]];
    const auto model =
        fit_model(kind, params, take_rows(x, train), y_train, derive_seed(fit_seed, f));
    accuracy[f] = evaluate(model, take_rows(x, folds[f]).values, y_test).accuracy;
  });
  return accuracy;
}

std::vector<double> cross_validate(ModelKind kind, const ModelParams& params,
                                   const EncodedMatrix& x, std::span<const std::uint8_t> y,
                                   std::size_t folds, std::uint64_t seed) {
  return cross_validate(kind, params, x, y, kfold_indices(y, folds, derive_seed(seed, kFoldStream)),
                        derive_seed(seed, kFitStream));
}

TuneReport random_search(ModelKind kind, const Dataset& data, EncoderMode mode,
                         const TunerConfig& cfg) {
  if (cfg.rounds < 1) throw ConfigError("tuner needs at least 1 round");
  const std::size_t positives = data.count_positive();
  const std::size_t min_class = std::min(positives, data.rows() - positives);
  auto check_folds = [&](std::size_t k) {
    if (k < 2 || k > min_class)
      throw ConfigError(fmt::format(
          "fold count {} must lie in [2, {}] (smallest class size)", k, min_class));
  };
  check_folds(cfg.folds);
  for (std::size_t k : cfg.rescreen_folds) check_folds(k);
  switch (kind) {
    case ModelKind::forest:
      check_range(cfg.space.n_trees, "n_trees");
      [[fallthrough]];
    case ModelKind::tree:
      check_range(cfg.space.max_depth, "max_depth");
      check_range(cfg.space.min_leaf, "min_leaf");
      break;
    case ModelKind::knn:
      check_range(cfg.space.k, "k");
      break;
  }

  const auto encoder = FittedEncoder::fit(data.schema_ptr(), mode);
  const EncodedMatrix x = encoder.transform(data);
  const auto y = data.targets();

  TuneReport report;
  report.kind = kind;
  report.encoding = mode;
  report.trials.resize(cfg.rounds);
  const auto folds = kfold_indices(y, cfg.folds, derive_seed(cfg.seed, kFoldStream));
  parallel_for(cfg.rounds, [&](std::size_t t) {
    Trial& trial = report.trials[t];
    trial.index = t;
    Rng rng(derive_seed(cfg.seed, t));
    trial.params = sample_params(kind, cfg.space, rng);
    try {
      trial.fold_accuracy =
          cross_validate(kind, trial.params, x, y, folds, derive_seed(derive_seed(cfg.seed, t), kFitStream));
      trial.mean_accuracy = mean(trial.fold_accuracy);
    } catch (const Error& e) {
      trial.failed = true;
      trial.error = e.what();
    }
  });

  bool found = false;
  for (const auto& trial : report.trials) {
    if (trial.failed) continue;
    if (!found || trial.mean_accuracy > report.best_score) {
      found = true;
      report.best_index = trial.index;
      report.best_score = trial.mean_accuracy;
    }
  }
  if (!found) throw FitError("every tuning trial failed: " + report.trials.front().error);
  report.best = report.trials[report.best_index].params;

  const auto best_fit_seed = derive_seed(derive_seed(cfg.seed, report.best_index), kFitStream);
  report.fold_settings.push_back(
      {cfg.folds, report.trials[report.best_index].fold_accuracy, report.best_score});
  for (std::size_t k : cfg.rescreen_folds) {
    FoldSetting setting;
    setting.folds = k;
    setting.fold_accuracy =
        cross_validate(kind, report.best, x, y,
                       kfold_indices(y, k, derive_seed(cfg.seed, kFoldStream + k)), best_fit_seed);
    setting.mean_accuracy = mean(setting.fold_accuracy);
    report.fold_settings.push_back(std::move(setting));
  }
  double sum = 0;
  for (const auto& s : report.fold_settings) sum += s.mean_accuracy;
  report.combined_accuracy = sum / double(report.fold_settings.size());
  return report;
}

nlohmann::ordered_json tune_report_to_json(const TuneReport& report) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(report.kind);
  j["encoding"] = to_string(report.encoding);
  auto trials = nlohmann::ordered_json::array();
  for (const auto& t : report.trials) {
    nlohmann::ordered_json tj;
    tj["index"] = t.index;
    tj["params"] = params_to_json(report.kind, t.params);
    tj["failed"] = t.failed;
    if (t.failed) tj["error"] = t.error;
    tj["fold_accuracy"] = t.fold_accuracy;
    tj["mean_accuracy"] = t.mean_accuracy;
    trials.push_back(std::move(tj));
  }
  j["trials"] = std::move(trials);
  j["best"] = {{"index", report.best_index},
               {"params", params_to_json(report.kind, report.best)},
               {"mean_accuracy", report.best_score}};
  auto settings = nlohmann::ordered_json::array();
  for (const auto& s : report.fold_settings) {
    settings.push_back({{"folds", s.folds},
                        {"fold_accuracy", s.fold_accuracy},
                        {"mean_accuracy", s.mean_accuracy}});
  }
  j["fold_settings"] = std::move(settings);
  j["combined_accuracy"] = report.combined_accuracy;
  return j;
}

}  // namespace tabx
