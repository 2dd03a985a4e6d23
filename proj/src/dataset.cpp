#include "tabx/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>

#include "tabx/error.hpp"
#include "tabx/random.hpp"

namespace tabx {
namespace {

void validate_cell(const FeatureSpec& f, double value, std::size_t row) {
  if (!std::isfinite(value))
    throw DataError(fmt::format("row {}, column '{}': non-finite value", row, f.name));
  if (!f.categorical()) return;
  const double max_level = static_cast<double>(f.levels.size() - 1);
  if (value < 0 || value > max_level || value != std::floor(value))
    throw DataError(fmt::format("row {}, column '{}': {} is not a level index", row, f.name,
                                value));
}

bool needs_quotes(std::string_view field) {
  return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

}  // namespace

void write_csv_field(std::ostream& out, std::string_view field) {
  if (!needs_quotes(field)) {
    out << field;
    return;
  }
  out << '"';
  for (char c : field) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

Dataset::Dataset(std::shared_ptr<const FeatureSchema> schema, std::vector<double> cells,
                 std::vector<std::uint8_t> target)
    : schema_(std::move(schema)), cells_(std::move(cells)), target_(std::move(target)) {
  if (!schema_) throw DataError("dataset has no schema");
  const std::size_t p = schema_->size();
  if (cells_.size() != target_.size() * p)
    throw DataError(fmt::format("dataset has {} cells, expected {} rows x {} columns",
                                cells_.size(), target_.size(), p));
  for (std::size_t i = 0; i < target_.size(); ++i) {
    if (target_[i] > 1) throw DataError(fmt::format("row {}: target is not binary", i + 1));
    for (std::size_t j = 0; j < p; ++j) validate_cell(schema_->feature(j), cells_[i * p + j], i + 1);
  }
}

std::size_t Dataset::count_positive() const {
  std::size_t count = 0;
  for (auto t : target_) count += t;
  return count;
}

std::string Dataset::cell_text(std::size_t row, std::size_t col) const {
  const auto& f = schema_->feature(col);
  const double value = cell(row, col);
  if (f.categorical()) return f.levels[static_cast<std::size_t>(value)];
  return format_number(value);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t p = cols();
  std::vector<double> cells;
  cells.reserve(indices.size() * p);
  std::vector<std::uint8_t> target;
  target.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= rows()) throw IndexError(fmt::format("row index {} out of range", i));
    const auto r = row(i);
    cells.insert(cells.end(), r.begin(), r.end());
    target.push_back(target_[i]);
  }
  return Dataset(schema_, std::move(cells), std::move(target));
}

std::string format_number(double value) { return fmt::format("{}", value); }

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  std::istreambuf_iterator<char> it(in), end;
  while (it != end) {
    const char c = *it++;
    if (in_quotes) {
      if (c == '"') {
        if (it != end && *it == '"') {
          field.push_back('"');
          ++it;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) throw DataError("stray quote inside unquoted field");
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (it != end && *it == '\n') ++it;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

Dataset read_csv(std::istream& in, std::shared_ptr<const FeatureSchema> schema,
                 std::string_view source) {
  const auto records = parse_csv(in);
  if (records.empty()) throw DataError(fmt::format("{}: missing header row", source));

  const auto& header = records.front();
  const std::size_t p = schema->size();
  constexpr std::size_t kUnmapped = static_cast<std::size_t>(-1);
  std::vector<std::size_t> column_of_feature(p, kUnmapped);
  std::size_t target_column = kUnmapped;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name == schema->target().name) {
      if (target_column != kUnmapped)
        throw DataError(fmt::format("{}: duplicate column '{}'", source, name));
      target_column = c;
      continue;
    }
    const auto idx = schema->find(name);
    if (!idx) throw DataError(fmt::format("{}: column '{}' is not in the schema", source, name));
    if (column_of_feature[*idx] != kUnmapped)
      throw DataError(fmt::format("{}: duplicate column '{}'", source, name));
    column_of_feature[*idx] = c;
  }
  if (target_column == kUnmapped)
    throw DataError(fmt::format("{}: missing target column '{}'", source, schema->target().name));
  for (std::size_t j = 0; j < p; ++j) {
    if (column_of_feature[j] == kUnmapped)
      throw DataError(
          fmt::format("{}: missing column '{}'", source, schema->feature(j).name));
  }

  const std::size_t n = records.size() - 1;
  std::vector<double> cells(n * p);
  std::vector<std::uint8_t> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = records[i + 1];
    const std::size_t row_no = i + 1;
    if (rec.size() != header.size())
      throw DataError(fmt::format("{}: row {} has {} fields, header has {}", source, row_no,
                                  rec.size(), header.size()));
    for (std::size_t j = 0; j < p; ++j) {
      const auto& f = schema->feature(j);
      const std::string& text = rec[column_of_feature[j]];
      if (text.empty())
        throw DataError(fmt::format("{}: row {}, column '{}': blank cell", source, row_no, f.name));
      if (f.categorical()) {
        const auto level = f.level_index(text);
        if (!level)
          throw DataError(fmt::format("{}: row {}, column '{}': undeclared level '{}'", source,
                                      row_no, f.name, text));
        cells[i * p + j] = static_cast<double>(*level);
      } else {
        double value = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
          throw DataError(fmt::format("{}: row {}, column '{}': '{}' is not a finite number",
                                      source, row_no, f.name, text));
        cells[i * p + j] = value;
      }
    }
    const std::string& label = rec[target_column];
    const auto level = schema->target().level_index(label);
    if (!level)
      throw DataError(fmt::format("{}: row {}, column '{}': undeclared level '{}'", source,
                                  row_no, schema->target().name, label));
    target[i] = *level == schema->positive_index() ? 1 : 0;
  }
  return Dataset(std::move(schema), std::move(cells), std::move(target));
}

Dataset load_csv(const std::filesystem::path& path, std::shared_ptr<const FeatureSchema> schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file '" + path.string() + "'");
  return read_csv(in, std::move(schema), path.string());
}

void write_csv(std::ostream& out, const Dataset& data) {
  const auto& schema = data.schema();
  for (const auto& f : schema.features()) {
    write_csv_field(out, f.name);
    out << ',';
  }
  write_csv_field(out, schema.target().name);
  out << '\n';
  const auto& levels = schema.target().levels;
  const std::size_t negative_index = 1 - schema.positive_index();
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      write_csv_field(out, data.cell_text(i, j));
      out << ',';
    }
    write_csv_field(out, levels[data.target(i) ? schema.positive_index() : negative_index]);
    out << '\n';
  }
}

SplitIndices stratified_split_indices(std::span<const std::uint8_t> labels, double test_frac,
                                      std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0))
    throw ConfigError(fmt::format("test fraction {} is outside (0, 1)", test_frac));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] ? 1 : 0].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < 2)
      throw DataError(fmt::format("class {} has {} rows; stratified split needs at least 2", c,
                                  by_class[c].size()));
  }

  std::vector<std::uint8_t> in_test(labels.size(), 0);
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(std::span<std::size_t>(idx));
    const auto take = static_cast<std::size_t>(std::llround(test_frac * idx.size()));
    for (std::size_t k = 0; k < take; ++k) in_test[idx[k]] = 1;
  }
  SplitIndices split;
  for (std::size_t i = 0; i < labels.size(); ++i) (in_test[i] ? split.test : split.train).push_back(i);
  return split;
}

std::pair<Dataset, Dataset> split_stratified(const Dataset& data, double test_frac,
                                             std::uint64_t seed) {
  const auto split = stratified_split_indices(data.targets(), test_frac, seed);
  return {data.subset(split.train), data.subset(split.test)};
}

CohortSelector parse_cohort(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0 || eq + 1 == text.size())
    throw QueryError("cohort must be written feature=level, got '" + std::string(text) + "'");
  return {std::string(text.substr(0, eq)), std::string(text.substr(eq + 1))};
}

Dataset filter_cohort(const Dataset& data, std::string_view feature, std::string_view level) {
  const auto col = data.schema().find(feature);
  if (!col) throw QueryError("unknown feature '" + std::string(feature) + "'");
  const auto& f = data.schema().feature(*col);
  if (!f.categorical())
    throw QueryError("feature '" + f.name + "' is numeric; cohorts need a categorical feature");
  const auto idx = f.level_index(level);
  if (!idx)
    throw QueryError("'" + std::string(level) + "' is not a level of '" + f.name + "'");
  const double code = static_cast<double>(*idx);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (data.cell(i, *col) == code) keep.push_back(i);
  }
  return data.subset(keep);
}

}  // namespace tabx
