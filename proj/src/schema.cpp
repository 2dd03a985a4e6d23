#include "tabx/schema.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tabx/error.hpp"

namespace tabx {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

void validate_feature(const FeatureSpec& f, std::size_t line) {
  if (f.name.empty()) throw SchemaError(line, "feature name is empty");
  if (f.kind == FeatureKind::numeric) {
    if (!f.levels.empty())
      throw SchemaError(line, "numeric feature '" + f.name + "' declares levels");
    return;
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& level : f.levels) {
    if (level.empty())
      throw SchemaError(line, "feature '" + f.name + "' has an empty level");
    if (!seen.insert(level).second)
      throw SchemaError(line, "feature '" + f.name + "' repeats level '" + level + "'");
  }
  if (f.levels.size() < 2)
    throw SchemaError(line, "categorical feature '" + f.name + "' needs at least 2 levels");
}

}  // namespace

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::numeric: return "numeric";
    case FeatureKind::ordinal: return "ordinal";
    case FeatureKind::nominal: return "nominal";
  }
  return "numeric";
}

std::string_view to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::A: return "A";
    case FeatureGroup::B: return "B";
    case FeatureGroup::C: return "C";
    case FeatureGroup::D: return "D";
    case FeatureGroup::none: return "-";
  }
  return "-";
}

std::optional<FeatureKind> parse_feature_kind(std::string_view text) {
  if (text == "numeric") return FeatureKind::numeric;
  if (text == "ordinal") return FeatureKind::ordinal;
  if (text == "nominal") return FeatureKind::nominal;
  return std::nullopt;
}

std::optional<FeatureGroup> parse_feature_group(std::string_view text) {
  if (text == "A") return FeatureGroup::A;
  if (text == "B") return FeatureGroup::B;
  if (text == "C") return FeatureGroup::C;
  if (text == "D") return FeatureGroup::D;
  if (text == "-") return FeatureGroup::none;
  return std::nullopt;
}

std::optional<std::size_t> FeatureSpec::level_index(std::string_view level) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == level) return i;
  }
  return std::nullopt;
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, FeatureSpec target,
                             std::string positive_level)
    : features_(std::move(features)),
      target_(std::move(target)),
      positive_level_(std::move(positive_level)) {
  if (features_.empty()) throw SchemaError(0, "schema declares no predictor features");
  std::unordered_set<std::string_view> names;
  for (const auto& f : features_) {
    validate_feature(f, 0);
    if (!names.insert(f.name).second)
      throw SchemaError(0, "duplicate feature name '" + f.name + "'");
  }
  validate_feature(target_, 0);
  if (names.contains(target_.name))
    throw SchemaError(0, "target '" + target_.name + "' is also a predictor");
  if (target_.kind != FeatureKind::nominal || target_.levels.size() != 2)
    throw SchemaError(0, "target '" + target_.name + "' must be nominal with exactly 2 levels");
  const auto pos = target_.level_index(positive_level_);
  if (!pos)
    throw SchemaError(0, "positive level '" + positive_level_ + "' is not a level of '" +
                             target_.name + "'");
  positive_index_ = *pos;
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

FeatureSchema parse_schema(std::string_view text) {
  struct Declared {
    FeatureSpec spec;
    std::size_t line;
  };
  std::vector<Declared> declared;
  std::unordered_map<std::string, std::size_t> by_name;
  std::optional<std::string> target_name;
  std::string positive_level;
  std::size_t target_line = 0;

  const auto lines = split(text, '\n');
  std::size_t line_no = 0;
  for (std::string_view line : lines) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const auto fields = split(line, '\t');
    if (fields[0] == "!target") {
      if (target_name) throw SchemaError(line_no, "second !target directive");
      if (fields.size() != 3)
        throw SchemaError(line_no, "!target directive needs <name> and <positive_level>");
      target_name = std::string(fields[1]);
      positive_level = std::string(fields[2]);
      target_line = line_no;
      continue;
    }
    if (fields[0].starts_with('!'))
      throw SchemaError(line_no, "unknown directive '" + std::string(fields[0]) + "'");

    if (fields.size() != 4 && fields.size() != 3)
      throw SchemaError(line_no, "expected name<TAB>kind<TAB>group<TAB>levels");
    FeatureSpec spec;
    spec.name = std::string(fields[0]);
    const auto kind = parse_feature_kind(fields[1]);
    if (!kind) throw SchemaError(line_no, "unknown kind '" + std::string(fields[1]) + "'");
    spec.kind = *kind;
    const auto group = parse_feature_group(fields[2]);
    if (!group) throw SchemaError(line_no, "unknown group '" + std::string(fields[2]) + "'");
    spec.group = *group;
    if (fields.size() == 4 && !fields[3].empty()) {
      for (auto level : split(fields[3], '|')) spec.levels.emplace_back(level);
    }
    validate_feature(spec, line_no);
    if (by_name.contains(spec.name))
      throw SchemaError(line_no, "duplicate feature name '" + spec.name + "'");
    by_name.emplace(spec.name, declared.size());
    declared.push_back({std::move(spec), line_no});
  }

  if (!target_name) throw SchemaError(line_no, "missing !target directive");
  const auto it = by_name.find(*target_name);
  if (it == by_name.end())
    throw SchemaError(target_line, "target '" + *target_name + "' is not declared");
  const Declared& target = declared[it->second];
  if (target.spec.kind != FeatureKind::nominal || target.spec.levels.size() != 2)
    throw SchemaError(target.line,
                      "target '" + *target_name + "' must be nominal with exactly 2 levels");
  if (!target.spec.level_index(positive_level))
    throw SchemaError(target_line, "positive level '" + positive_level +
                                       "' is not a level of '" + *target_name + "'");

  std::vector<FeatureSpec> features;
  for (auto& d : declared) {
    if (d.spec.name != *target_name) features.push_back(d.spec);
  }
  if (features.empty()) throw SchemaError(target_line, "schema declares no predictor features");
  return FeatureSchema(std::move(features), target.spec, positive_level);
}

std::string serialize_schema(const FeatureSchema& schema) {
  std::ostringstream out;
  auto write = [&out](const FeatureSpec& f) {
    out << f.name << '\t' << to_string(f.kind) << '\t' << to_string(f.group) << '\t';
    for (std::size_t i = 0; i < f.levels.size(); ++i) {
      if (i) out << '|';
      out << f.levels[i];
    }
    out << '\n';
  };
  for (const auto& f : schema.features()) write(f);
  write(schema.target());
  out << "!target\t" << schema.target().name << '\t' << schema.positive_level() << '\n';
  return out.str();
}

FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open schema file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_schema(buffer.str());
}

}  // namespace tabx
