#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tabx/dataset.hpp"
#include "tabx/matrix.hpp"
#include "tabx/schema.hpp"

namespace tabx {

// hybrid: label codes for ordinal features, one-hot for nominal ones.
// one_hot_all / label_all apply a single scheme to every categorical feature.
enum class EncoderMode { hybrid, one_hot_all, label_all };

std::string_view to_string(EncoderMode mode);
std::optional<EncoderMode> parse_encoder_mode(std::string_view text);

enum class ColumnRole { numeric, label, one_hot };

// Where an encoded column comes from. `level` is meaningful for one_hot only.
struct ColumnSource {
  std::size_t feature = 0;
  ColumnRole role = ColumnRole::numeric;
  std::size_t level = 0;

  friend bool operator==(const ColumnSource&, const ColumnSource&) = default;
};

// Contiguous encoded columns owned by one source feature.
struct FeatureBlock {
  std::size_t offset = 0;
  std::size_t width = 0;
  ColumnRole role = ColumnRole::numeric;
};

struct EncodedMatrix {
  Matrix values;
  std::vector<ColumnSource> provenance;

  bool is_numeric(std::size_t col) const { return provenance[col].role == ColumnRole::numeric; }
};

// Column layout derived from the schema alone, never from data.
class FittedEncoder {
 public:
  static FittedEncoder fit(std::shared_ptr<const FeatureSchema> schema, EncoderMode mode);

  EncoderMode mode() const { return mode_; }
  const FeatureSchema& schema() const { return *schema_; }
  const std::shared_ptr<const FeatureSchema>& schema_ptr() const { return schema_; }

  std::size_t width() const { return provenance_.size(); }
  const std::vector<FeatureBlock>& blocks() const { return blocks_; }
  const std::vector<ColumnSource>& provenance() const { return provenance_; }

  // Throws ShapeError if the dataset's schema differs from the encoder's.
  EncodedMatrix transform(const Dataset& data) const;

  // Encodes n rows of raw cells (schema order, level indices for categoricals).
  Matrix encode_rows(std::span<const double> cells, std::size_t n) const;
  void encode_row(std::span<const double> row, std::span<double> out) const;

  // (feature name, level) for one-hot columns, (feature name, "ordinal-scalar")
  // for label-coded columns, (feature name, "numeric") for passthrough.
  std::pair<std::string, std::string> decode_column(std::size_t col) const;

 private:
  FittedEncoder(std::shared_ptr<const FeatureSchema> schema, EncoderMode mode);

  std::shared_ptr<const FeatureSchema> schema_;
  EncoderMode mode_;
  std::vector<FeatureBlock> blocks_;
  std::vector<ColumnSource> provenance_;
};

}  // namespace tabx
