#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tabx/blackbox.hpp"
#include "tabx/dataset.hpp"
#include "tabx/matrix.hpp"

namespace tabx {

// Shapley attribution over original features (a one-hot block is one player).
// phi > 0 pushes the score toward accept. For exact attributions
// sum(phi) + base_value == prediction.
struct AttributionVector {
  std::size_t instance = 0;
  double base_value = 0;   // v(empty set): mean background score
  double prediction = 0;   // v(all features): score of the instance
  std::vector<double> phi;
  std::vector<double> std_error;  // empty for exact attributions
};

// `count` background rows drawn without replacement (all rows if count >= n),
// returned in dataset order.
Matrix sample_background(const Dataset& data, std::size_t count, std::uint64_t seed);

// Interventional value of a coalition: mean score over background rows with
// coalition features taken from the instance. `coalition[i] != 0` marks
// membership. Throws ConfigError on an empty background.
double value_function(const BlackBox& model, std::span<const double> instance,
                      std::span<const std::uint8_t> coalition, const Matrix& background);

// Enumerates all 2^d coalitions. Throws ConfigError when d > max_width.
AttributionVector exact_shapley(const BlackBox& model, std::span<const double> instance,
                                const Matrix& background, std::size_t max_width = 15);

// Mean marginal contribution over the given feature orderings; std_error is
// the standard error across orderings.
AttributionVector permutation_shapley(const BlackBox& model, std::span<const double> instance,
                                      const Matrix& background,
                                      std::span<const std::vector<std::size_t>> permutations);

// Monte-Carlo estimate from permutations/2 antithetic pairs (a random ordering
// and its reverse). std_error is computed across pair means. Requires
// permutations >= 2; odd counts are rounded down.
AttributionVector sampled_shapley(const BlackBox& model, std::span<const double> instance,
                                  const Matrix& background, std::size_t permutations,
                                  std::uint64_t seed);

enum class ShapleyMode { exact, sampled, automatic };

std::string_view to_string(ShapleyMode mode);
std::optional<ShapleyMode> parse_shapley_mode(std::string_view text);

struct GlobalOptions {
  ShapleyMode mode = ShapleyMode::automatic;  // automatic: exact iff d <= max_width
  std::size_t max_width = 15;
  std::size_t permutations = 64;
  std::size_t top_k = 20;
  std::uint64_t seed = 0;
};

struct FeatureImportance {
  std::string feature;
  double importance = 0;  // mean |phi| over instances
};

struct GlobalSummary {
  std::vector<AttributionVector> instances;
  std::vector<FeatureImportance> ranking;  // descending, ties by feature name
  std::size_t top_k = 0;

  std::span<const FeatureImportance> top() const {
    return std::span(ranking).first(std::min(top_k, ranking.size()));
  }
};

// Attributes every row of `data`. Throws DataError on an empty dataset.
GlobalSummary global_summary(const BlackBox& model, const Dataset& data,
                             const Matrix& background, const GlobalOptions& options);

// Beeswarm-ready rows: instance,feature,phi,feature_value,base_value.
void write_attribution_csv(std::ostream& out, const GlobalSummary& summary, const Dataset& data);

// Ordered array of {feature, importance} for the top-k features.
nlohmann::ordered_json ranking_to_json(const GlobalSummary& summary);

}  // namespace tabx
