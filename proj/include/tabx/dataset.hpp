#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tabx/schema.hpp"

namespace tabx {

// Immutable, fully validated table. Cells are stored row-major in schema
// order; categorical cells hold the 0-based index of their declared level.
// Targets are 1 for the schema's positive level, 0 otherwise.
class Dataset {
 public:
  // Throws DataError if any cell violates the schema.
  Dataset(std::shared_ptr<const FeatureSchema> schema, std::vector<double> cells,
          std::vector<std::uint8_t> target);

  const FeatureSchema& schema() const { return *schema_; }
  const std::shared_ptr<const FeatureSchema>& schema_ptr() const { return schema_; }

  std::size_t rows() const { return target_.size(); }
  std::size_t cols() const { return schema_->size(); }
  bool empty() const { return target_.empty(); }

  double cell(std::size_t row, std::size_t col) const { return cells_[row * cols() + col]; }
  std::span<const double> row(std::size_t i) const {
    return {cells_.data() + i * cols(), cols()};
  }
  std::span<const double> cells() const { return cells_; }
  std::span<const std::uint8_t> targets() const { return target_; }
  std::uint8_t target(std::size_t i) const { return target_[i]; }
  std::size_t count_positive() const;

  // Text of a cell as it would appear in a CSV file.
  std::string cell_text(std::size_t row, std::size_t col) const;

  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  std::shared_ptr<const FeatureSchema> schema_;
  std::vector<double> cells_;
  std::vector<std::uint8_t> target_;
};

std::string format_number(double value);

// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line endings.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);

// Header must name every schema feature and the target, in any order.
Dataset read_csv(std::istream& in, std::shared_ptr<const FeatureSchema> schema,
                 std::string_view source = "<stream>");
Dataset load_csv(const std::filesystem::path& path,
                 std::shared_ptr<const FeatureSchema> schema);

// Writes one CSV field, quoting it when required.
void write_csv_field(std::ostream& out, std::string_view field);

// Writes features in schema order followed by the target column.
void write_csv(std::ostream& out, const Dataset& data);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per class, round(test_frac * class_count) rows go to the test side.
SplitIndices stratified_split_indices(std::span<const std::uint8_t> labels,
                                      double test_frac, std::uint64_t seed);
std::pair<Dataset, Dataset> split_stratified(const Dataset& data, double test_frac,
                                             std::uint64_t seed);

struct CohortSelector {
  std::string feature;
  std::string level;
};

// Parses "feature=level".
CohortSelector parse_cohort(std::string_view text);

Dataset filter_cohort(const Dataset& data, std::string_view feature,
                      std::string_view level);

}  // namespace tabx
