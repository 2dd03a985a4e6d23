#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabx/dataset.hpp"
#include "tabx/encoding.hpp"
#include "tabx/learning.hpp"
#include "tabx/random.hpp"

namespace tabx {

// Stratified folds: class members are shuffled and dealt round-robin, the
// second class continuing where the first stopped, so fold sizes and per-fold
// class counts each differ by at most one. Throws DataError when a class has
// fewer than k rows.
std::vector<std::vector<std::size_t>> kfold_indices(std::span<const std::uint8_t> y,
                                                    std::size_t k, std::uint64_t seed);

struct IntRange {
  long long lo = 0;
  long long hi = 0;
};

struct SearchSpace {
  IntRange n_trees{50, 500};
  IntRange max_depth{2, 32};
  IntRange min_leaf{1, 20};
  IntRange k{1, 50};
};

struct TunerConfig {
  std::size_t rounds = 30;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  SearchSpace space;
  // Extra fold settings the best configuration is re-scored at, e.g. {10, 15}.
  std::vector<std::size_t> rescreen_folds;
};

struct Trial {
  std::size_t index = 0;
  ModelParams params;
  bool failed = false;
  std::string error;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0;
};

struct FoldSetting {
  std::size_t folds = 0;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0;
};

struct TuneReport {
  ModelKind kind = ModelKind::forest;
  EncoderMode encoding = EncoderMode::hybrid;
  std::vector<Trial> trials;
  std::size_t best_index = 0;
  ModelParams best;
  double best_score = 0;
  // The tuning fold setting first, then each rescreen setting.
  std::vector<FoldSetting> fold_settings;
  // Mean of fold_settings' mean accuracies.
  double combined_accuracy = 0;
};

ModelParams sample_params(ModelKind kind, const SearchSpace& space, Rng& rng);

// Accuracy of each held-out fold after fitting on the remaining folds.
std::vector<double> cross_validate(ModelKind kind, const ModelParams& params,
                                   const EncodedMatrix& x, std::span<const std::uint8_t> y,
                                   const std::vector<std::vector<std::size_t>>& folds,
                                   std::uint64_t fit_seed);
std::vector<double> cross_validate(ModelKind kind, const ModelParams& params,
                                   const EncodedMatrix& x, std::span<const std::uint8_t> y,
                                   std::size_t folds, std::uint64_t seed);

// Random search scored by mean fold accuracy. Failed trials are recorded and
// never selected; ConfigError if the config is invalid, FitError if every
// trial failed.
TuneReport random_search(ModelKind kind, const Dataset& data, EncoderMode mode,
                         const TunerConfig& cfg);

nlohmann::ordered_json tune_report_to_json(const TuneReport& report);

}  // namespace tabx
