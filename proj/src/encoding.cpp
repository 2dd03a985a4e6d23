#include "tabx/encoding.hpp"

#include <fmt/format.h>

#include "tabx/error.hpp"
#include "tabx/parallel.hpp"

namespace tabx {

std::string_view to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::hybrid: return "hybrid";
    case EncoderMode::one_hot_all: return "onehot";
    case EncoderMode::label_all: return "label";
  }
  return "hybrid";
}

std::optional<EncoderMode> parse_encoder_mode(std::string_view text) {
  if (text == "hybrid") return EncoderMode::hybrid;
  if (text == "onehot" || text == "one_hot_all") return EncoderMode::one_hot_all;
  if (text == "label" || text == "label_all") return EncoderMode::label_all;
  return std::nullopt;
}

FittedEncoder::FittedEncoder(std::shared_ptr<const FeatureSchema> schema, EncoderMode mode)
    : schema_(std::move(schema)), mode_(mode) {}

FittedEncoder FittedEncoder::fit(std::shared_ptr<const FeatureSchema> schema, EncoderMode mode) {
  if (!schema) throw ConfigError("encoder needs a schema");
  FittedEncoder enc(std::move(schema), mode);
  const auto& features = enc.schema_->features();
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& spec = features[f];
    FeatureBlock block{enc.provenance_.size(), 1, ColumnRole::numeric};
    if (spec.categorical()) {
      const bool one_hot =
          mode == EncoderMode::one_hot_all ||
          (mode == EncoderMode::hybrid && spec.kind == FeatureKind::nominal);
      block.role = one_hot ? ColumnRole::one_hot : ColumnRole::label;
      if (one_hot) block.width = spec.levels.size();
    }
    for (std::size_t k = 0; k < block.width; ++k) {
      enc.provenance_.push_back({f, block.role, block.role == ColumnRole::one_hot ? k : 0});
    }
    enc.blocks_.push_back(block);
  }
  return enc;
}

void FittedEncoder::encode_row(std::span<const double> row, std::span<double> out) const {
  for (std::size_t f = 0; f < blocks_.size(); ++f) {
    const auto& b = blocks_[f];
    const double v = row[f];
    if (b.role == ColumnRole::one_hot) {
      const auto level = static_cast<std::size_t>(v);
      if (v < 0 || level >= b.width)
        throw DataError(fmt::format("feature '{}': level index {} has no encoding",
                                    schema_->feature(f).name, v));
      for (std::size_t k = 0; k < b.width; ++k) out[b.offset + k] = k == level ? 1.0 : 0.0;
    } else {
      out[b.offset] = v;
    }
  }
}

Matrix FittedEncoder::encode_rows(std::span<const double> cells, std::size_t n) const {
  const std::size_t p = blocks_.size();
  if (cells.size() != n * p)
    throw ShapeError(fmt::format("expected {} x {} raw cells, got {}", n, p, cells.size()));
  Matrix out(n, width());
  constexpr std::size_t kChunk = 256;
  parallel_for((n + kChunk - 1) / kChunk, [&](std::size_t chunk) {
    const std::size_t end = std::min(n, (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      encode_row(cells.subspan(i * p, p), out.row(i));
    }
  });
  return out;
}

EncodedMatrix FittedEncoder::transform(const Dataset& data) const {
  if (data.schema_ptr() != schema_ && !(data.schema() == *schema_))
    throw ShapeError("dataset schema does not match the encoder schema");
  return {encode_rows(data.cells(), data.rows()), provenance_};
}

std::pair<std::string, std::string> FittedEncoder::decode_column(std::size_t col) const {
  if (col >= provenance_.size())
    throw IndexError(fmt::format("column {} out of range [0, {})", col, provenance_.size()));
  const auto& src = provenance_[col];
  const auto& spec = schema_->feature(src.feature);
  switch (src.role) {
    case ColumnRole::numeric: return {spec.name, "numeric"};
    case ColumnRole::label: return {spec.name, "ordinal-scalar"};
    case ColumnRole::one_hot: return {spec.name, spec.levels[src.level]};
  }
  return {spec.name, "numeric"};
}

}  // namespace tabx
