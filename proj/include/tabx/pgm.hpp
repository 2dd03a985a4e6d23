#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabx/blackbox.hpp"
#include "tabx/dataset.hpp"
#include "tabx/random.hpp"
#include "tabx/schema.hpp"

namespace tabx {

enum class NodeMode { features, groups };
enum class NodeKind { feature, group };

// How a realization decides that the model's output changed.
enum class ChangeRule {
  label_flip,         // predicted label differs
  probability_shift,  // |delta P(accept)| > tau
};

std::string_view to_string(NodeMode mode);
std::string_view to_string(NodeKind kind);
std::string_view to_string(ChangeRule rule);
std::optional<NodeMode> parse_node_mode(std::string_view text);
std::optional<ChangeRule> parse_change_rule(std::string_view text);

struct PgmConfig {
  double perturb_prob = 0.3;  // per (record, node) Bernoulli rate
  std::size_t samples = 2000;
  std::size_t runs = 5;
  double alpha = 0.05;
  NodeMode mode = NodeMode::features;
  std::uint64_t seed = 0;
  // Index of the first run; run r draws from substream first_run + r.
  std::size_t first_run = 0;
  ChangeRule change = ChangeRule::label_flip;
  double tau = 0.1;
  std::size_t min_cohort_rows = 50;

  // Throws ConfigError.
  void validate() const;
};

// An explanation node: a set of features perturbed together.
struct ExplanationNode {
  std::string name;
  NodeKind kind = NodeKind::feature;
  std::vector<std::size_t> members;  // ascending feature indices
};

// One node per predictor feature.
std::vector<ExplanationNode> feature_nodes(const FeatureSchema& schema);
// One node per group tag A-D that owns at least one feature. Throws
// ConfigError when no feature is tagged.
std::vector<ExplanationNode> group_nodes(const FeatureSchema& schema);
// Checks members are nonempty, in range and disjoint across nodes.
void validate_nodes(std::span<const ExplanationNode> nodes, std::size_t num_features);

// Empirical per-feature distributions of a dataset.
class Marginals {
 public:
  explicit Marginals(const Dataset& data);

  std::size_t num_features() const { return columns_.size(); }
  // Value of the feature in a uniformly drawn row.
  double draw(std::size_t feature, Rng& rng) const;
  // True when every row holds the same value, so replacement is the identity.
  bool constant(std::size_t feature) const { return constant_[feature] != 0; }

 private:
  std::vector<std::vector<double>> columns_;
  std::vector<std::uint8_t> constant_;
};

// Replaces every member feature of the masked nodes with an independent draw
// from its marginal. Draws happen in ascending feature order, so the result
// does not depend on how features are arranged into nodes.
void perturb_record(std::span<double> record, std::span<const std::uint8_t> node_mask,
                    std::span<const ExplanationNode> nodes, const Marginals& marginals,
                    Rng& rng);

struct RealizationTable {
  std::size_t num_nodes = 0;
  std::vector<std::uint8_t> perturbed;  // samples x num_nodes, row-major
  std::vector<std::uint8_t> changed;    // per sample
  std::vector<std::size_t> source_rows;

  std::size_t samples() const { return changed.size(); }
  std::uint8_t perturbed_at(std::size_t s, std::size_t node) const {
    return perturbed[s * num_nodes + node];
  }
};

// Deterministic per (cfg.seed, run_index). Throws DataError on an empty dataset.
RealizationTable generate_realizations(const BlackBox& model, const Dataset& data,
                                       std::span<const ExplanationNode> nodes,
                                       const PgmConfig& cfg, std::size_t run_index);

// 2x2 table of perturbation (R) against output change (I):
//   a = R1 I1, b = R1 I0, c = R0 I1, d = R0 I0.
struct NodeStats {
  std::size_t a = 0, b = 0, c = 0, d = 0;
  double chi_square = 0;
  double p_value = 1;
  double phi = 0;  // |phi coefficient| = sqrt(chi_square / N)
};

// chi2 = N (ad - bc)^2 / ((a+b)(c+d)(a+c)(b+d)); any zero margin gives chi2 = 0,
// p = 1, phi = 0. The p-value is the 1-dof upper tail.
NodeStats contingency_stats(std::size_t a, std::size_t b, std::size_t c, std::size_t d);
double chi_square_upper_tail_1dof(double chi_square);
std::vector<NodeStats> dependency_stats(const RealizationTable& table);

struct GraphNode {
  std::string name;
  NodeKind kind = NodeKind::feature;
  std::vector<std::string> members;
  double weight = 0;   // mean |phi| over runs
  double p_value = 1;  // mean p-value over runs
  bool selected = false;
  std::vector<double> run_weights;
  std::vector<double> run_p_values;
};

// Star graph: every node points at the target.
struct ExplanationGraph {
  std::string target;
  std::vector<GraphNode> nodes;
  PgmConfig config;
  std::optional<CohortSelector> cohort;
  std::size_t rows = 0;  // rows of the explained dataset (or cohort)
};

// Runs cfg.runs independent realization rounds over `nodes` (defaults to the
// nodes implied by cfg.mode) and averages weights and p-values.
ExplanationGraph explain(const BlackBox& model, const Dataset& data, const PgmConfig& cfg,
                         std::optional<std::vector<ExplanationNode>> nodes = std::nullopt);

// explain() on the cohort's rows with marginals refit on the cohort. Throws
// CohortError when the cohort has fewer than cfg.min_cohort_rows rows.
ExplanationGraph cohort_explain(const BlackBox& model, const Dataset& data,
                                const CohortSelector& cohort, const PgmConfig& cfg);

}  // namespace tabx
