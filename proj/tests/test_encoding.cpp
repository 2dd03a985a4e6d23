#include <gtest/gtest.h>

#include <numeric>

#include "helpers.hpp"
#include "tabx/encoding.hpp"
#include "tabx/error.hpp"
#include "tabx/parallel.hpp"
#include "tabx/synthetic.hpp"

using namespace tabx;
using tabx::test::csv_from;
using tabx::test::schema_from;

namespace {

const char* kEncSchema =
    "agree\tordinal\tC\tstrongly disagree|disagree|neutral|agree|strongly agree\n"
    "gender\tnominal\tB\tmale|female\n"
    "age\tnumeric\tB\n"
    "decision\tnominal\t-\trefuse|accept\n"
    "!target\tdecision\taccept\n";

}  // namespace

TEST(Encoding, HybridWidthAndValues) {
  auto schema = schema_from(kEncSchema);
  auto enc = FittedEncoder::fit(schema, EncoderMode::hybrid);
  EXPECT_EQ(enc.width(), 4u);
  auto d = csv_from("agree,gender,age,decision\nstrongly agree,female,30,accept\n", schema);
  auto x = enc.transform(d);
  ASSERT_EQ(x.values.cols, 4u);
  EXPECT_EQ(x.values(0, 0), 4.0);  // 5th of 5 levels
  EXPECT_EQ(x.values(0, 1), 0.0);  // male column
  EXPECT_EQ(x.values(0, 2), 1.0);  // female column
  EXPECT_EQ(x.values(0, 3), 30.0);
  EXPECT_TRUE(x.is_numeric(3));
  EXPECT_FALSE(x.is_numeric(0));
}

TEST(Encoding, ModeWidths) {
  auto schema = schema_from(kEncSchema);
  EXPECT_EQ(FittedEncoder::fit(schema, EncoderMode::one_hot_all).width(), 5u + 2u + 1u);
  EXPECT_EQ(FittedEncoder::fit(schema, EncoderMode::label_all).width(), 3u);
  for (auto m : {EncoderMode::hybrid, EncoderMode::one_hot_all, EncoderMode::label_all})
    EXPECT_EQ(parse_encoder_mode(to_string(m)), m);
  EXPECT_FALSE(parse_encoder_mode("binary").has_value());
}

TEST(Encoding, HybridWidthMatchesSchemaArithmetic) {
  auto schema = default_survey_schema();
  std::size_t expect = 0;
  for (const auto& f : schema->features())
    expect += f.kind == FeatureKind::nominal ? f.levels.size() : 1;
  EXPECT_EQ(FittedEncoder::fit(schema, EncoderMode::hybrid).width(), expect);
}

TEST(Encoding, DecodeColumns) {
  auto schema = schema_from(kEncSchema);
  auto enc = FittedEncoder::fit(schema, EncoderMode::hybrid);
  EXPECT_EQ(enc.decode_column(0), std::make_pair(std::string("agree"), std::string("ordinal-scalar")));
  EXPECT_EQ(enc.decode_column(2), std::make_pair(std::string("gender"), std::string("female")));
  EXPECT_EQ(enc.decode_column(3), std::make_pair(std::string("age"), std::string("numeric")));
  EXPECT_THROW(enc.decode_column(4), IndexError);

  auto survey = default_survey_schema();
  auto full = FittedEncoder::fit(survey, EncoderMode::hybrid);
  std::vector<std::string> seen;
  for (std::size_t c = 0; c < full.width(); ++c) {
    auto name = full.decode_column(c).first;
    if (seen.empty() || seen.back() != name) seen.push_back(name);
  }
  ASSERT_EQ(seen.size(), survey->size());
  for (std::size_t f = 0; f < survey->size(); ++f) EXPECT_EQ(seen[f], survey->feature(f).name);
}

TEST(Encoding, ProvenanceCoversEveryColumnOnce) {
  auto schema = default_survey_schema();
  for (auto mode : {EncoderMode::hybrid, EncoderMode::one_hot_all, EncoderMode::label_all}) {
    auto enc = FittedEncoder::fit(schema, mode);
    std::size_t next = 0;
    ASSERT_EQ(enc.blocks().size(), schema->size());
    for (std::size_t f = 0; f < schema->size(); ++f) {
      const auto& b = enc.blocks()[f];
      EXPECT_EQ(b.offset, next);
      for (std::size_t j = 0; j < b.width; ++j) EXPECT_EQ(enc.provenance()[b.offset + j].feature, f);
      next += b.width;
    }
    EXPECT_EQ(next, enc.width());
  }
}

TEST(Encoding, EmptyDatasetGivesZeroRows) {
  auto schema = schema_from(kEncSchema);
  Dataset empty(schema, {}, {});
  auto x = FittedEncoder::fit(schema, EncoderMode::hybrid).transform(empty);
  EXPECT_EQ(x.values.rows, 0u);
  EXPECT_EQ(x.values.cols, 4u);
}

TEST(Encoding, OneHotBlocksSumToOneAndOrdinalIsMonotone) {
  auto spec = make_preset("nominal-heavy", 11);
  auto [data, truth] = generate(spec, 700, 100);
  auto enc = FittedEncoder::fit(data.schema_ptr(), EncoderMode::hybrid);
  auto x = enc.transform(data);
  for (std::size_t f = 0; f < data.cols(); ++f) {
    const auto& b = enc.blocks()[f];
    const auto& feat = data.schema().feature(f);
    for (std::size_t i = 0; i < data.rows(); ++i) {
      if (b.role == ColumnRole::one_hot) {
        double sum = 0;
        for (std::size_t j = 0; j < b.width; ++j) {
          const double v = x.values(i, b.offset + j);
          EXPECT_TRUE(v == 0.0 || v == 1.0);
          sum += v;
        }
        EXPECT_EQ(sum, 1.0);
      } else if (b.role == ColumnRole::label) {
        const double v = x.values(i, b.offset);
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, double(feat.levels.size()));
      }
    }
  }
  // Strictly increasing code per declared level.
  auto schema = schema_from(kEncSchema);
  auto lab = FittedEncoder::fit(schema, EncoderMode::hybrid);
  double prev = -1;
  for (std::size_t level = 0; level < 5; ++level) {
    std::vector<double> row{double(level), 0, 0}, out(lab.width());
    lab.encode_row(row, out);
    EXPECT_GT(out[0], prev);
    prev = out[0];
  }
}

TEST(Encoding, DeterministicAndRowOrderInvariant) {
  auto spec = make_preset("default", 2);
  auto [data, truth] = generate(spec, 600, 100);
  auto enc = FittedEncoder::fit(data.schema_ptr(), EncoderMode::hybrid);
  auto a = enc.transform(data);
  const auto cap = max_threads();
  set_max_threads(1);
  auto b = enc.transform(data);
  set_max_threads(cap);
  EXPECT_EQ(a.values, b.values);

  std::vector<std::size_t> perm(data.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  auto permuted = enc.transform(data.subset(perm));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto r1 = a.values.row(perm[i]);
    auto r2 = permuted.values.row(i);
    EXPECT_TRUE(std::ranges::equal(r1, r2));
  }
}

TEST(Encoding, SchemaMismatchIsShapeError) {
  auto enc = FittedEncoder::fit(schema_from(kEncSchema), EncoderMode::hybrid);
  auto other = schema_from(test::kSmallSchema);
  Dataset d(other, {1, 0, 2}, {1});
  EXPECT_THROW(enc.transform(d), ShapeError);
}
