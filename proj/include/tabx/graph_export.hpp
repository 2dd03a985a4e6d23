#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "tabx/pgm.hpp"

namespace tabx {

// DOT digraph: the target is a doublecircle, every explanation node has an
// edge to it (selected or not) with weight="%.4f" and penwidth scaled by weight.
void write_dot(std::ostream& out, const ExplanationGraph& graph);
std::string to_dot(const ExplanationGraph& graph);

nlohmann::ordered_json graph_to_json(const ExplanationGraph& graph);
nlohmann::ordered_json pgm_config_to_json(const PgmConfig& cfg);

}  // namespace tabx
