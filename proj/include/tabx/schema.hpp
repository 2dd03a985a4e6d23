#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tabx {

enum class FeatureKind { numeric, ordinal, nominal };

// Composite feature categories: A culture, B demographic, C vaccine,
// D COVID-19 information. `none` leaves a feature out of every group node.
enum class FeatureGroup { A, B, C, D, none };

inline constexpr FeatureGroup kAllGroups[] = {FeatureGroup::A, FeatureGroup::B,
                                              FeatureGroup::C, FeatureGroup::D};

std::string_view to_string(FeatureKind kind);
std::string_view to_string(FeatureGroup group);
std::optional<FeatureKind> parse_feature_kind(std::string_view text);
std::optional<FeatureGroup> parse_feature_group(std::string_view text);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  std::vector<std::string> levels;  // empty iff numeric; order is significant
  FeatureGroup group = FeatureGroup::none;

  bool categorical() const { return kind != FeatureKind::numeric; }
  std::optional<std::size_t> level_index(std::string_view level) const;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

// Validated column description. Predictor features keep their declared order;
// the binary target is held apart from them.
class FeatureSchema {
 public:
  // Throws SchemaError when any invariant fails.
  FeatureSchema(std::vector<FeatureSpec> features, FeatureSpec target,
                std::string positive_level);

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
  std::size_t size() const { return features_.size(); }

  const FeatureSpec& target() const { return target_; }
  const std::string& positive_level() const { return positive_level_; }
  std::size_t positive_index() const { return positive_index_; }

  std::optional<std::size_t> find(std::string_view name) const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  std::vector<FeatureSpec> features_;
  FeatureSpec target_;
  std::string positive_level_;
  std::size_t positive_index_ = 0;
};

// Parses the TAB-separated schema document:
//   name<TAB>kind<TAB>group<TAB>levels      (levels '|'-separated)
//   !target<TAB>name<TAB>positive_level     (exactly once)
// Lines starting with '#' and blank lines are ignored.
FeatureSchema parse_schema(std::string_view text);

// Canonical document: predictor lines in order, then the target feature line,
// then the directive. parse_schema(serialize_schema(s)) == s.
std::string serialize_schema(const FeatureSchema& schema);

FeatureSchema load_schema(const std::string& path);

}  // namespace tabx
