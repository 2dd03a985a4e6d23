#include "tabx/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "tabx/error.hpp"
#include "tabx/parallel.hpp"
#include "tabx/random.hpp"

namespace tabx {
namespace {

// Mean computed relative to the first value so that a batch of identical
// scores averages to exactly that score.
double stable_mean(std::span<const double> v) {
  const double first = v[0];
  double offset = 0;
  for (double x : v) offset += x - first;
  return first + offset / double(v.size());
}

void check_inputs(const BlackBox& model, std::span<const double> instance,
                  const Matrix& background) {
  if (background.rows == 0) throw ConfigError("Shapley background set is empty");
  const std::size_t d = model.num_features();
  if (instance.size() != d || background.cols != d)
    throw ShapeError(fmt::format("model has {} features; instance has {}, background has {}", d,
                                 instance.size(), background.cols));
}

// Background rows progressively overwritten with instance values as features
// join the coalition.
class HybridBatch {
 public:
  HybridBatch(const BlackBox& model, std::span<const double> instance, const Matrix& background)
      : model_(model), instance_(instance), rows_(background), scores_(background.rows) {}

  void join(std::size_t feature) {
    for (std::size_t b = 0; b < rows_.rows; ++b) rows_(b, feature) = instance_[feature];
  }

  double value() {
    model_.score(rows_.data, scores_);
    return stable_mean(scores_);
  }

 private:
  const BlackBox& model_;
  std::span<const double> instance_;
  Matrix rows_;
  std::vector<double> scores_;
};

std::vector<double> permutation_contributions(const BlackBox& model,
                                              std::span<const double> instance,
                                              const Matrix& background, double base_value,
                                              std::span<const std::size_t> order) {
  std::vector<double> contrib(instance.size(), 0.0);
  HybridBatch batch(model, instance, background);
  double previous = base_value;
  for (std::size_t feature : order) {
    batch.join(feature);
    const double current = batch.value();
    contrib[feature] = current - previous;
    previous = current;
  }
  return contrib;
}

void check_permutation(std::span<const std::size_t> order, std::size_t d) {
  if (order.size() != d) throw ConfigError("feature ordering has the wrong length");
  std::vector<std::uint8_t> seen(d, 0);
  for (std::size_t f : order) {
    if (f >= d || seen[f]) throw ConfigError("feature ordering is not a permutation");
    seen[f] = 1;
  }
}

// Mean and standard error of per-unit contribution vectors.
void summarize(const std::vector<std::vector<double>>& units, AttributionVector& out) {
  const std::size_t d = out.phi.size();
  const double count = double(units.size());
  std::fill(out.phi.begin(), out.phi.end(), 0.0);
  for (const auto& u : units)
    for (std::size_t i = 0; i < d; ++i) out.phi[i] += u[i];
  for (auto& v : out.phi) v /= count;
  out.std_error.assign(d, 0.0);
  if (units.size() < 2) return;
  for (const auto& u : units)
    for (std::size_t i = 0; i < d; ++i) out.std_error[i] += (u[i] - out.phi[i]) * (u[i] - out.phi[i]);
  for (auto& v : out.std_error) v = std::sqrt(v / (count - 1.0) / count);
}

double base_value_of(const BlackBox& model, const Matrix& background) {
  std::vector<double> scores(background.rows);
  model.score(background.data, scores);
  return stable_mean(scores);
}

}  // namespace

Matrix sample_background(const Dataset& data, std::size_t count, std::uint64_t seed) {
  if (data.empty()) throw DataError("cannot draw a background set from an empty dataset");
  std::vector<std::size_t> idx(data.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (count < idx.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
  }
  Matrix out(idx.size(), data.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = data.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

double value_function(const BlackBox& model, std::span<const double> instance,
                      std::span<const std::uint8_t> coalition, const Matrix& background) {
  check_inputs(model, instance, background);
  if (coalition.size() != instance.size())
    throw ShapeError("coalition mask length differs from the feature count");
  HybridBatch batch(model, instance, background);
  for (std::size_t i = 0; i < coalition.size(); ++i) {
    if (coalition[i]) batch.join(i);
  }
  return batch.value();
}

AttributionVector exact_shapley(const BlackBox& model, std::span<const double> instance,
                                const Matrix& background, std::size_t max_width) {
  check_inputs(model, instance, background);
  const std::size_t d = instance.size();
  if (d > max_width || d >= 31)
    throw ConfigError(fmt::format(
        "exact Shapley enumeration over {} features exceeds the limit of {}; use sampled mode",
        d, std::min<std::size_t>(max_width, 30)));

  const std::size_t subsets = std::size_t{1} << d;
  std::vector<double> value(subsets);
  parallel_for(subsets, [&](std::size_t mask) {
    HybridBatch batch(model, instance, background);
    for (std::size_t i = 0; i < d; ++i) {
      if (mask >> i & 1) batch.join(i);
    }
    value[mask] = batch.value();
  });

  // weight[s] = s! (d - s - 1)! / d! = 1 / (d * C(d - 1, s))
  std::vector<double> weight(d);
  double binom = 1.0;
  for (std::size_t s = 0; s < d; ++s) {
    weight[s] = 1.0 / (double(d) * binom);
    binom = binom * double(d - 1 - s) / double(s + 1);
  }

  AttributionVector out;
  out.base_value = value[0];
  out.prediction = value[subsets - 1];
  out.phi.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double phi = 0;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (mask & bit) continue;
      phi += weight[std::popcount(mask)] * (value[mask | bit] - value[mask]);
    }
    out.phi[i] = phi;
  }
  return out;
}

AttributionVector permutation_shapley(const BlackBox& model, std::span<const double> instance,
                                      const Matrix& background,
                                      std::span<const std::vector<std::size_t>> permutations) {
  check_inputs(model, instance, background);
  const std::size_t d = instance.size();
  if (permutations.empty()) throw ConfigError("no feature orderings given");
  for (const auto& p : permutations) check_permutation(p, d);

  AttributionVector out;
  out.base_value = base_value_of(model, background);
  out.prediction = model.score_one(instance);
  out.phi.assign(d, 0.0);
  std::vector<std::vector<double>> units(permutations.size());
  parallel_for(permutations.size(), [&](std::size_t k) {
    units[k] = permutation_contributions(model, instance, background, out.base_value,
                                         permutations[k]);
  });
  summarize(units, out);
  return out;
}

AttributionVector sampled_shapley(const BlackBox& model, std::span<const double> instance,
                                  const Matrix& background, std::size_t permutations,
                                  std::uint64_t seed) {
  check_inputs(model, instance, background);
  if (permutations < 2)
    throw ConfigError("sampled Shapley needs at least 2 permutations (one antithetic pair)");
  const std::size_t d = instance.size();
  const std::size_t pairs = permutations / 2;

  AttributionVector out;
  out.base_value = base_value_of(model, background);
  out.prediction = model.score_one(instance);
  out.phi.assign(d, 0.0);
  std::vector<std::vector<double>> units(pairs);
  parallel_for(pairs, [&](std::size_t k) {
    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    Rng rng(derive_seed(seed, k));
    rng.shuffle(std::span<std::size_t>(order));
    auto forward = permutation_contributions(model, instance, background, out.base_value, order);
    std::reverse(order.begin(), order.end());
    const auto backward =
        permutation_contributions(model, instance, background, out.base_value, order);
    for (std::size_t i = 0; i < d; ++i) forward[i] = 0.5 * (forward[i] + backward[i]);
    units[k] = std::move(forward);
  });
  summarize(units, out);
  return out;
}

std::string_view to_string(ShapleyMode mode) {
  switch (mode) {
    case ShapleyMode::exact: return "exact";
    case ShapleyMode::sampled: return "sampled";
    case ShapleyMode::automatic: return "auto";
  }
  return "auto";
}

std::optional<ShapleyMode> parse_shapley_mode(std::string_view text) {
  if (text == "exact") return ShapleyMode::exact;
  if (text == "sampled") return ShapleyMode::sampled;
  if (text == "auto") return ShapleyMode::automatic;
  return std::nullopt;
}

GlobalSummary global_summary(const BlackBox& model, const Dataset& data,
                             const Matrix& background, const GlobalOptions& options) {
  if (data.empty()) throw DataError("cannot summarize attributions over an empty dataset");
  const std::size_t d = data.cols();
  const bool exact = options.mode == ShapleyMode::exact ||
                     (options.mode == ShapleyMode::automatic && d <= options.max_width);

  GlobalSummary summary;
  summary.top_k = std::min(options.top_k, d);
  summary.instances.resize(data.rows());
  parallel_for(data.rows(), [&](std::size_t i) {
    auto attribution =
        exact ? exact_shapley(model, data.row(i), background, options.max_width)
              : sampled_shapley(model, data.row(i), background, options.permutations,
                                derive_seed(options.seed, i));
    attribution.instance = i;
    summary.instances[i] = std::move(attribution);
  });

  summary.ranking.resize(d);
  for (std::size_t f = 0; f < d; ++f) {
    double total = 0;
    for (const auto& a : summary.instances) total += std::abs(a.phi[f]);
    summary.ranking[f] = {data.schema().feature(f).name, total / double(data.rows())};
  }
  std::sort(summary.ranking.begin(), summary.ranking.end(),
            [](const FeatureImportance& a, const FeatureImportance& b) {
              if (a.importance != b.importance) return a.importance > b.importance;
              return a.feature < b.feature;
            });
  return summary;
}

void write_attribution_csv(std::ostream& out, const GlobalSummary& summary, const Dataset& data) {
  out << "instance,feature,phi,feature_value,base_value\n";
  for (const auto& a : summary.instances) {
    for (std::size_t f = 0; f < a.phi.size(); ++f) {
      out << a.instance << ',';
      write_csv_field(out, data.schema().feature(f).name);
      out << ',' << format_number(a.phi[f]) << ',';
      write_csv_field(out, data.cell_text(a.instance, f));
      out << ',' << format_number(a.base_value) << '\n';
    }
  }
}

nlohmann::ordered_json ranking_to_json(const GlobalSummary& summary) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& r : summary.top()) {
    j.push_back({{"feature", r.feature}, {"importance", r.importance}});
  }
  return j;
}

}  // namespace tabx
