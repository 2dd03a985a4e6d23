#include "tabx/graph_export.hpp"

#include <ostream>
#include <sstream>

#include <fmt/format.h>

namespace tabx {
namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_dot(std::ostream& out, const ExplanationGraph& graph) {
  out << "digraph explanation {\n";
  out << "  rankdir=LR;\n";
  out << "  " << quote(graph.target) << " [shape=doublecircle];\n";
  for (const auto& node : graph.nodes) {
    out << "  " << quote(node.name) << " [shape=" << (node.kind == NodeKind::group ? "box" : "ellipse")
        << ", label=" << quote(node.name) << "];\n";
  }
  for (const auto& node : graph.nodes) {
    out << fmt::format("  {} -> {} [weight=\"{:.4f}\", penwidth=\"{:.4f}\", p_value=\"{:.4g}\", "
                       "selected=\"{}\"];\n",
                       quote(node.name), quote(graph.target), node.weight,
                       0.5 + 10.0 * node.weight, node.p_value,
                       node.selected ? "true" : "false");
  }
  out << "}\n";
}

std::string to_dot(const ExplanationGraph& graph) {
  std::ostringstream out;
  write_dot(out, graph);
  return out.str();
}

nlohmann::ordered_json pgm_config_to_json(const PgmConfig& cfg) {
  nlohmann::ordered_json j;
  j["perturb_prob"] = cfg.perturb_prob;
  j["samples"] = cfg.samples;
  j["runs"] = cfg.runs;
  j["alpha"] = cfg.alpha;
  j["mode"] = to_string(cfg.mode);
  j["seed"] = cfg.seed;
  j["first_run"] = cfg.first_run;
  j["change"] = to_string(cfg.change);
  j["tau"] = cfg.tau;
  j["min_cohort_rows"] = cfg.min_cohort_rows;
  return j;
}

nlohmann::ordered_json graph_to_json(const ExplanationGraph& graph) {
  nlohmann::ordered_json j;
  j["target"] = graph.target;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& node : graph.nodes) {
    nlohmann::ordered_json n;
    n["name"] = node.name;
    n["kind"] = to_string(node.kind);
    n["weight"] = node.weight;
    n["p_value"] = node.p_value;
    n["selected"] = node.selected;
    n["members"] = node.members;
    n["run_weights"] = node.run_weights;
    n["run_p_values"] = node.run_p_values;
    nodes.push_back(std::move(n));
  }
  j["nodes"] = std::move(nodes);
  j["config"] = pgm_config_to_json(graph.config);
  j["runs"] = graph.config.runs;
  j["rows"] = graph.rows;
  if (graph.cohort) {
    j["cohort"] = {{"feature", graph.cohort->feature}, {"level", graph.cohort->level}};
  } else {
    j["cohort"] = nullptr;
  }
  return j;
}

}  // namespace tabx
