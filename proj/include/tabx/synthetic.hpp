#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tabx/dataset.hpp"
#include "tabx/schema.hpp"

namespace tabx {

inline constexpr std::string_view kEthnicityFeature = "ethnicity";

// Normal law for a numeric feature; draws are rounded to `decimals` places.
struct NumericLaw {
  double mean = 0;
  double sd = 1;
  int decimals = 2;
};

// Planted logistic survey generator. Features are independent given
// ethnicity: ethnicity follows `ethnic_mix` (remainder goes to "Other"),
// categorical features are uniform over their levels, numeric features
// follow their NumericLaw. The label is
//   y ~ Bernoulli(sigmoid(eta + noise * N(0,1)))
//   eta = intercept + sum_f coefficient[f] * multiplier(ethnicity, group f) * s_f(x_f)
// with contribution scores s_f in roughly [-1, 1] (see contribution()).
struct GeneratorSpec {
  std::shared_ptr<const FeatureSchema> schema;
  // Fractions for the ethnicity levels other than "Other"; missing ones are 0.
  std::map<std::string, double> ethnic_mix;
  std::vector<double> coefficients;  // one per predictor, schema order
  // Per ethnicity level: multipliers for groups A, B, C, D. Ungrouped
  // features and unlisted ethnicities use 1.
  std::map<std::string, std::array<double, 4>> cohort_overrides;
  std::map<std::string, NumericLaw> numeric_laws;  // unlisted: mean 0, sd 1
  double intercept = 0;
  double noise = 0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Score of a cell in the logit. Ordinal codes map linearly onto [-1, 1],
// nominal levels alternate +1/-1 and are centred over the levels, numeric
// values are standardised by their law.
double contribution(const GeneratorSpec& spec, std::size_t feature, double value);

// Multiplier applied to `feature` for a record whose ethnicity cell is `ethnicity`.
double multiplier(const GeneratorSpec& spec, std::size_t feature, double ethnicity);

// P(y = 1 | record) under the generative law (noise integrated out).
double positive_probability(const GeneratorSpec& spec, std::span<const double> record);

struct BayesRate {
  double rate = 0;
  double std_error = 0;
};

// Monte-Carlo estimate of E[max(p, 1 - p)] on `samples` fresh records drawn
// from a stream disjoint from generate()'s rows.
BayesRate bayes_rate(const GeneratorSpec& spec, std::size_t samples = 100000);

struct GroundTruth {
  std::vector<std::string> causal_features;
  std::vector<std::pair<std::string, double>> coefficients;  // nonzero only
  BayesRate bayes;
  // Ethnicity level -> groups ordered by planted logit variance, largest first.
  std::map<std::string, std::vector<std::string>> cohort_rankings;
};

// Row i draws from substream i of spec.seed, so output does not depend on
// the thread count. Throws ConfigError when n == 0 or the GeneratorSpec is invalid.
std::pair<Dataset, GroundTruth> generate(const GeneratorSpec& spec, std::size_t n,
                                         std::size_t bayes_samples = 100000);

// Draws one record (no label) from substream `stream` of the generator seed.
std::vector<double> draw_record(const GeneratorSpec& spec, std::uint64_t stream);

nlohmann::ordered_json ground_truth_to_json(const GroundTruth& truth);

// 125 predictors tagged A-D, with "ethnicity" in group B and the target
// "vaccine_decision" {refuse, accept}.
std::shared_ptr<const FeatureSchema> default_survey_schema();

// Presets:
//   default        survey schema, 10 causal features, cohort mechanisms
//                  (Asian -> C, African American -> A, Hispanic -> D)
//   planted        same causal set without cohort mechanisms
//   nominal-heavy  mostly multi-level nominal features
//   group-only     only group C features are causal
GeneratorSpec make_preset(std::string_view name, std::uint64_t seed);
std::vector<std::string> preset_names();

}  // namespace tabx
