#include "tabx/pgm.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tabx/error.hpp"
#include "tabx/learning.hpp"
#include "tabx/parallel.hpp"

namespace tabx {
namespace {

constexpr std::uint64_t kRowStream = 0;
constexpr std::uint64_t kReplacementStream = 1;

// Substream for a node's perturbation indicator, keyed by the node's member
// set so that renaming or reordering nodes leaves the draws unchanged.
std::uint64_t node_stream(const ExplanationNode& node) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::size_t m : node.members) h = splitmix64(h ^ m);
  return h | (std::uint64_t{1} << 63);
}

}  // namespace

std::string_view to_string(NodeMode mode) {
  return mode == NodeMode::features ? "features" : "groups";
}

std::string_view to_string(NodeKind kind) { return kind == NodeKind::feature ? "feature" : "group"; }

std::string_view to_string(ChangeRule rule) {
  return rule == ChangeRule::label_flip ? "label" : "prob";
}

std::optional<NodeMode> parse_node_mode(std::string_view text) {
  if (text == "features") return NodeMode::features;
  if (text == "groups") return NodeMode::groups;
  return std::nullopt;
}

std::optional<ChangeRule> parse_change_rule(std::string_view text) {
  if (text == "label") return ChangeRule::label_flip;
  if (text == "prob") return ChangeRule::probability_shift;
  return std::nullopt;
}

void PgmConfig::validate() const {
  if (!(perturb_prob > 0.0 && perturb_prob < 1.0))
    throw ConfigError(fmt::format("perturbation probability {} is outside (0, 1)", perturb_prob));
  if (samples < 100) throw ConfigError(fmt::format("need at least 100 samples, got {}", samples));
  if (runs < 1) throw ConfigError("need at least 1 run");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError(fmt::format("significance level {} is outside (0, 1)", alpha));
  if (change == ChangeRule::probability_shift && !(tau >= 0.0 && tau < 1.0))
    throw ConfigError(fmt::format("tau {} is outside [0, 1)", tau));
}

std::vector<ExplanationNode> feature_nodes(const FeatureSchema& schema) {
  std::vector<ExplanationNode> nodes;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    nodes.push_back({schema.feature(f).name, NodeKind::feature, {f}});
  }
  return nodes;
}

std::vector<ExplanationNode> group_nodes(const FeatureSchema& schema) {
  std::vector<ExplanationNode> nodes;
  for (FeatureGroup g : kAllGroups) {
    ExplanationNode node{std::string(to_string(g)), NodeKind::group, {}};
    for (std::size_t f = 0; f < schema.size(); ++f) {
      if (schema.feature(f).group == g) node.members.push_back(f);
    }
    if (!node.members.empty()) nodes.push_back(std::move(node));
  }
  if (nodes.empty()) throw ConfigError("groups mode needs features tagged with a group A-D");
  return nodes;
}

void validate_nodes(std::span<const ExplanationNode> nodes, std::size_t num_features) {
  if (nodes.empty()) throw ConfigError("no explanation nodes");
  std::vector<std::uint8_t> owned(num_features, 0);
  for (const auto& node : nodes) {
    if (node.members.empty())
      throw ConfigError("explanation node '" + node.name + "' owns no features");
    for (std::size_t m : node.members) {
      if (m >= num_features)
        throw ConfigError(fmt::format("node '{}' references feature {} of {}", node.name, m,
                                      num_features));
      if (owned[m]) throw ConfigError(fmt::format("feature {} belongs to two nodes", m));
      owned[m] = 1;
    }
  }
}

Marginals::Marginals(const Dataset& data) {
  if (data.empty()) throw DataError("cannot fit marginals on an empty dataset");
  columns_.resize(data.cols());
  constant_.resize(data.cols());
  for (std::size_t f = 0; f < data.cols(); ++f) {
    auto& col = columns_[f];
    col.resize(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) col[i] = data.cell(i, f);
    constant_[f] = std::all_of(col.begin(), col.end(), [&](double v) { return v == col[0]; });
  }
}

double Marginals::draw(std::size_t feature, Rng& rng) const {
  const auto& col = columns_[feature];
  return col[rng.index(col.size())];
}

void perturb_record(std::span<double> record, std::span<const std::uint8_t> node_mask,
                    std::span<const ExplanationNode> nodes, const Marginals& marginals,
                    Rng& rng) {
  std::vector<std::size_t> features;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (node_mask[k]) features.insert(features.end(), nodes[k].members.begin(), nodes[k].members.end());
  }
  std::sort(features.begin(), features.end());
  for (std::size_t f : features) record[f] = marginals.draw(f, rng);
}

RealizationTable generate_realizations(const BlackBox& model, const Dataset& data,
                                       std::span<const ExplanationNode> nodes,
                                       const PgmConfig& cfg, std::size_t run_index) {
  if (data.empty()) throw DataError("cannot generate realizations from an empty dataset");
  cfg.validate();
  validate_nodes(nodes, data.cols());
  const Marginals marginals(data);
  const std::size_t S = cfg.samples;
  const std::size_t p = data.cols();
  const std::size_t k = nodes.size();
  const std::uint64_t run_seed = derive_seed(cfg.seed, run_index);

  std::vector<std::uint64_t> node_streams(k);
  for (std::size_t j = 0; j < k; ++j) node_streams[j] = node_stream(nodes[j]);

  RealizationTable table;
  table.num_nodes = k;
  table.perturbed.assign(S * k, 0);
  table.changed.assign(S, 0);
  table.source_rows.assign(S, 0);

  // Rows [0, S) hold the original records, rows [S, 2S) their perturbations.
  std::vector<double> records(2 * S * p);
  parallel_for(S, [&](std::size_t s) {
    const std::uint64_t key = derive_seed(run_seed, s);
    Rng row_rng(derive_seed(key, kRowStream));
    const std::size_t src = row_rng.index(data.rows());
    table.source_rows[s] = src;
    std::uint8_t* mask = table.perturbed.data() + s * k;
    for (std::size_t j = 0; j < k; ++j) {
      mask[j] = key_uniform(derive_seed(key, node_streams[j])) < cfg.perturb_prob ? 1 : 0;
    }
    const auto row = data.row(src);
    std::copy(row.begin(), row.end(), records.begin() + s * p);
    std::span<double> perturbed(records.data() + (S + s) * p, p);
    std::copy(row.begin(), row.end(), perturbed.begin());
    Rng replace_rng(derive_seed(key, kReplacementStream));
    perturb_record(perturbed, {mask, k}, nodes, marginals, replace_rng);
  });

  std::vector<double> scores(2 * S);
  model.score(records, scores);
  for (std::size_t s = 0; s < S; ++s) {
    const double before = scores[s];
    const double after = scores[S + s];
    const bool changed = cfg.change == ChangeRule::label_flip
                             ? predicted_positive(before) != predicted_positive(after)
                             : std::abs(after - before) > cfg.tau;
    table.changed[s] = changed ? 1 : 0;
  }
  return table;
}

double chi_square_upper_tail_1dof(double chi_square) {
  if (!(chi_square > 0.0)) return 1.0;
  return std::erfc(std::sqrt(chi_square / 2.0));
}

NodeStats contingency_stats(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  NodeStats st{a, b, c, d};
  const double n = double(a + b + c + d);
  const double r1 = double(a + b), r0 = double(c + d), c1 = double(a + c), c0 = double(b + d);
  if (n == 0 || r1 == 0 || r0 == 0 || c1 == 0 || c0 == 0) return st;
  const double diff = double(a) * double(d) - double(b) * double(c);
  st.chi_square = n * diff * diff / (r1 * r0 * c1 * c0);
  st.p_value = chi_square_upper_tail_1dof(st.chi_square);
  st.phi = std::min(1.0, std::sqrt(st.chi_square / n));
  return st;
}

std::vector<NodeStats> dependency_stats(const RealizationTable& table) {
  std::vector<NodeStats> stats(table.num_nodes);
  for (std::size_t j = 0; j < table.num_nodes; ++j) {
    std::size_t counts[2][2] = {{0, 0}, {0, 0}};  // [R][I]
    for (std::size_t s = 0; s < table.samples(); ++s) {
      ++counts[table.perturbed_at(s, j)][table.changed[s]];
    }
    stats[j] = contingency_stats(counts[1][1], counts[1][0], counts[0][1], counts[0][0]);
  }
  return stats;
}

ExplanationGraph explain(const BlackBox& model, const Dataset& data, const PgmConfig& cfg,
                         std::optional<std::vector<ExplanationNode>> nodes) {
  cfg.validate();
  if (data.empty()) throw DataError("cannot explain an empty dataset");
  if (model.num_features() != data.cols())
    throw ShapeError(fmt::format("model has {} features, dataset has {}", model.num_features(),
                                 data.cols()));
  std::vector<ExplanationNode> node_list =
      nodes ? std::move(*nodes)
            : (cfg.mode == NodeMode::groups ? group_nodes(data.schema())
                                            : feature_nodes(data.schema()));
  validate_nodes(node_list, data.cols());

  ExplanationGraph graph;
  graph.target = data.schema().target().name;
  graph.config = cfg;
  graph.rows = data.rows();
  graph.nodes.resize(node_list.size());
  for (std::size_t j = 0; j < node_list.size(); ++j) {
    auto& g = graph.nodes[j];
    g.name = node_list[j].name;
    g.kind = node_list[j].kind;
    for (std::size_t m : node_list[j].members) g.members.push_back(data.schema().feature(m).name);
  }

  for (std::size_t r = 0; r < cfg.runs; ++r) {
    const auto table = generate_realizations(model, data, node_list, cfg, cfg.first_run + r);
    const auto stats = dependency_stats(table);
    for (std::size_t j = 0; j < stats.size(); ++j) {
      graph.nodes[j].run_weights.push_back(stats[j].phi);
      graph.nodes[j].run_p_values.push_back(stats[j].p_value);
    }
  }
  for (auto& g : graph.nodes) {
    double w = 0, p = 0;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
      w += g.run_weights[r];
      p += g.run_p_values[r];
    }
    g.weight = w / double(cfg.runs);
    g.p_value = p / double(cfg.runs);
    g.selected = g.p_value < cfg.alpha;
  }
  return graph;
}

ExplanationGraph cohort_explain(const BlackBox& model, const Dataset& data,
                                const CohortSelector& cohort, const PgmConfig& cfg) {
  cfg.validate();
  const Dataset rows = filter_cohort(data, cohort.feature, cohort.level);
  if (rows.rows() < cfg.min_cohort_rows || rows.empty())
    throw CohortError(rows.rows(),
                      fmt::format("cohort {}={} has {} rows; at least {} are required",
                                  cohort.feature, cohort.level, rows.rows(),
                                  std::max<std::size_t>(cfg.min_cohort_rows, 1)));
  auto graph = explain(model, rows, cfg);
  graph.cohort = cohort;
  return graph;
}

}  // namespace tabx
