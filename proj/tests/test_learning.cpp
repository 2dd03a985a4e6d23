#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "tabx/error.hpp"
#include "tabx/learning.hpp"
#include "tabx/metrics.hpp"
#include "tabx/parallel.hpp"
#include "tabx/random.hpp"
#include "tabx/synthetic.hpp"
#include "tabx/tuner.hpp"

using namespace tabx;

namespace {

EncodedMatrix numeric_matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  EncodedMatrix x;
  x.values = Matrix(rows, cols);
  x.values.data = std::move(values);
  for (std::size_t c = 0; c < cols; ++c) x.provenance.push_back({c, ColumnRole::numeric, 0});
  return x;
}

struct Blob {
  EncodedMatrix x;
  std::vector<std::uint8_t> y;
};

// Integer-valued features, label from a noisy threshold on the first two.
Blob random_blob(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * m);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < m; ++c) v[i * m + c] = double(rng.integer(0, 6));
    const double s = v[i * m] + (m > 1 ? v[i * m + 1] : 0.0) + rng.normal();
    y[i] = s > 6.0 ? 1 : 0;
  }
  y[0] = 0;
  y[1] = 1;
  return {numeric_matrix(n, m, std::move(v)), std::move(y)};
}

Blob survey_blob(std::size_t n, std::uint64_t seed) {
  auto spec = make_preset("planted", seed);
  auto [data, truth] = generate(spec, n, 100);
  auto enc = FittedEncoder::fit(data.schema_ptr(), EncoderMode::hybrid);
  std::vector<std::uint8_t> y(data.targets().begin(), data.targets().end());
  return {enc.transform(data), y};
}

}  // namespace

TEST(Tree, SeparablePointsFitPerfectlyAtDepthTwo) {
  // XOR-free but needs two cuts: positive iff x0 > 0.5 and x1 > 0.5.
  auto x = numeric_matrix(4, 2, {0, 0, 0, 1, 1, 0, 1, 1});
  std::vector<std::uint8_t> y{0, 0, 0, 1};
  ModelParams p;
  p.max_depth = 2;
  auto model = fit_model(ModelKind::tree, p, x, y, 1);
  auto m = evaluate(model, x.values, y);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_LE(model.trees()[0].depth(), 2u);
}

TEST(Tree, SingleClassAndBadParams) {
  auto x = numeric_matrix(3, 1, {1, 2, 3});
  std::vector<std::uint8_t> same{1, 1, 1};
  EXPECT_THROW(fit_model(ModelKind::tree, {}, x, same, 0), FitError);
  std::vector<std::uint8_t> y{0, 1, 1};
  ModelParams p;
  p.max_depth = 0;
  EXPECT_THROW(fit_model(ModelKind::tree, p, x, y, 0), ConfigError);
  p = {};
  p.min_leaf = 0;
  EXPECT_THROW(fit_model(ModelKind::tree, p, x, y, 0), ConfigError);
  p = {};
  p.n_trees = 0;
  EXPECT_THROW(fit_model(ModelKind::forest, p, x, y, 0), ConfigError);
  p = {};
  p.k = 4;
  EXPECT_THROW(fit_model(ModelKind::knn, p, x, y, 0), ConfigError);
  p.k = 0;
  EXPECT_THROW(fit_model(ModelKind::knn, p, x, y, 0), ConfigError);
  std::vector<std::uint8_t> short_y{0, 1};
  EXPECT_THROW(fit_model(ModelKind::tree, {}, x, short_y, 0), ShapeError);
}

TEST(Tree, LeafProbabilityIsClassFraction) {
  // Identical rows cannot be split: one leaf with 3 accept / 1 refuse.
  auto x = numeric_matrix(4, 1, {2, 2, 2, 2});
  std::vector<std::uint8_t> y{1, 0, 1, 1};
  auto model = fit_model(ModelKind::tree, {}, x, y, 0);
  auto proba = model.predict_proba(x.values);
  ASSERT_EQ(proba.cols, 2u);
  EXPECT_DOUBLE_EQ(proba(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(proba(0, 1), 0.75);
  EXPECT_EQ(model.trees()[0].nodes().size(), 1u);
}

TEST(Tree, RootSplitMatchesBruteForceGini) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto blob = random_blob(60, 3, seed);
    ModelParams p;
    p.max_depth = 1;
    auto model = fit_model(ModelKind::tree, p, blob.x, blob.y, seed);
    const auto& root = model.trees()[0].nodes()[0];
    ASSERT_FALSE(root.leaf());

    // Exhaustive weighted Gini impurity over every column and midpoint.
    const auto& m = blob.x.values;
    double best = 1e300;
    int best_col = -1;
    double best_thr = 0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::vector<double> vals;
      for (std::size_t r = 0; r < m.rows; ++r) vals.push_back(m(r, c));
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
        const double thr = (vals[k] + vals[k + 1]) / 2;
        double l[2] = {0, 0}, r[2] = {0, 0};
        for (std::size_t i = 0; i < m.rows; ++i) (m(i, c) <= thr ? l : r)[blob.y[i]] += 1;
        const double nl = l[0] + l[1], nr = r[0] + r[1];
        const double gl = 1 - (l[0] / nl) * (l[0] / nl) - (l[1] / nl) * (l[1] / nl);
        const double gr = 1 - (r[0] / nr) * (r[0] / nr) - (r[1] / nr) * (r[1] / nr);
        const double imp = (nl * gl + nr * gr) / double(m.rows);
        if (imp < best - 1e-12) {
          best = imp;
          best_col = int(c);
          best_thr = thr;
        }
      }
    }
    // Impurity of the chosen split must equal the optimum.
    double l[2] = {0, 0}, r[2] = {0, 0};
    for (std::size_t i = 0; i < m.rows; ++i)
      (m(i, root.feature) <= root.threshold ? l : r)[blob.y[i]] += 1;
    const double nl = l[0] + l[1], nr = r[0] + r[1];
    const double imp = (nl * (1 - (l[0] / nl) * (l[0] / nl) - (l[1] / nl) * (l[1] / nl)) +
                        nr * (1 - (r[0] / nr) * (r[0] / nr) - (r[1] / nr) * (r[1] / nr))) /
                       double(m.rows);
    EXPECT_NEAR(imp, best, 1e-12) << "seed " << seed;
    if (std::abs(imp - best) < 1e-12 && root.feature == best_col) {
      EXPECT_DOUBLE_EQ(root.threshold, best_thr);
    }
  }
}

TEST(Tree, LeavesPartitionTrainingRows) {
  auto blob = survey_blob(800, 4);
  ModelParams p;
  p.min_leaf = 3;
  auto model = fit_model(ModelKind::tree, p, blob.x, blob.y, 9);
  const auto& tree = model.trees()[0];
  std::vector<std::uint32_t> neg(tree.nodes().size()), pos(tree.nodes().size());
  for (std::size_t i = 0; i < blob.y.size(); ++i) {
    const auto leaf = tree.leaf_index(blob.x.values.row(i));
    ASSERT_TRUE(tree.nodes()[leaf].leaf());
    ++(blob.y[i] ? pos : neg)[leaf];
  }
  std::size_t total = 0;
  for (std::size_t k = 0; k < tree.nodes().size(); ++k) {
    const auto& node = tree.nodes()[k];
    if (!node.leaf()) continue;
    EXPECT_EQ(node.negatives, neg[k]);
    EXPECT_EQ(node.positives, pos[k]);
    EXPECT_GE(node.negatives + node.positives, p.min_leaf);
    total += node.negatives + node.positives;
  }
  EXPECT_EQ(total, blob.y.size());
}

TEST(Forest, ProbabilityIsMeanOverTrees) {
  auto blob = survey_blob(400, 1);
  ModelParams p;
  p.n_trees = 15;
  p.max_depth = 6;
  auto model = fit_model(ModelKind::forest, p, blob.x, blob.y, 3);
  ASSERT_EQ(model.trees().size(), 15u);
  auto proba = model.predict_proba(blob.x.values);
  for (std::size_t i = 0; i < 50; ++i) {
    double sum = 0;
    for (const auto& t : model.trees()) sum += t.predict_positive(blob.x.values.row(i));
    EXPECT_NEAR(proba(i, 1), sum / 15.0, 1e-12);
  }
}

TEST(Forest, OneUnbaggedTreeOverAllColumnsIsATree) {
  auto blob = survey_blob(300, 2);
  ModelParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.max_features = blob.x.values.cols;
  p.max_depth = 8;
  auto forest = fit_model(ModelKind::forest, p, blob.x, blob.y, 5);
  ModelParams tp = p;
  tp.max_features = 0;
  auto tree = fit_model(ModelKind::tree, tp, blob.x, blob.y, 77);
  EXPECT_EQ(forest.trees()[0], tree.trees()[0]);
  EXPECT_EQ(forest.predict_proba(blob.x.values), tree.predict_proba(blob.x.values));
}

TEST(Forest, DeterministicAcrossThreadCaps) {
  auto blob = survey_blob(300, 3);
  ModelParams p;
  p.n_trees = 12;
  const auto cap = max_threads();
  set_max_threads(1);
  auto a = fit_model(ModelKind::forest, p, blob.x, blob.y, 42);
  set_max_threads(8);
  auto b = fit_model(ModelKind::forest, p, blob.x, blob.y, 42);
  set_max_threads(cap);
  EXPECT_EQ(a.trees(), b.trees());
  auto c = fit_model(ModelKind::forest, p, blob.x, blob.y, 43);
  EXPECT_NE(a.trees(), c.trees());
}

TEST(Knn, OneNeighbourGivesHardProbabilities) {
  auto blob = random_blob(80, 3, 7);
  ModelParams p;
  p.k = 1;
  auto model = fit_model(ModelKind::knn, p, blob.x, blob.y, 0);
  auto proba = model.predict_proba(blob.x.values);
  for (std::size_t i = 0; i < proba.rows; ++i) {
    EXPECT_TRUE(proba(i, 1) == 0.0 || proba(i, 1) == 1.0);
  }
  p.k = 4;
  auto four = fit_model(ModelKind::knn, p, blob.x, blob.y, 0);
  for (double v : four.predict_positive(blob.x.values.data, blob.x.values.rows)) {
    const double scaled = v * 4;
    EXPECT_EQ(scaled, std::round(scaled));
  }
}

TEST(Model, ProbabilitiesSumToOneAndShapeIsChecked) {
  auto blob = survey_blob(300, 5);
  for (auto kind : {ModelKind::tree, ModelKind::forest, ModelKind::knn}) {
    ModelParams p;
    p.n_trees = 10;
    auto model = fit_model(kind, p, blob.x, blob.y, 1);
    auto proba = model.predict_proba(blob.x.values);
    for (std::size_t i = 0; i < proba.rows; ++i) {
      EXPECT_NEAR(proba(i, 0) + proba(i, 1), 1.0, 1e-12);
      EXPECT_GE(proba(i, 1), 0.0);
      EXPECT_LE(proba(i, 1), 1.0);
    }
    Matrix narrow(2, blob.x.values.cols - 1);
    EXPECT_THROW(model.predict_proba(narrow), ShapeError);
  }
}

TEST(Model, JsonRoundTripPredictsIdentically) {
  auto blob = survey_blob(300, 6);
  for (auto kind : {ModelKind::tree, ModelKind::forest, ModelKind::knn}) {
    ModelParams p;
    p.n_trees = 8;
    p.k = 7;
    auto model = fit_model(kind, p, blob.x, blob.y, 2);
    auto text = model.to_json().dump();
    auto back = FittedModel::from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back.kind(), kind);
    EXPECT_EQ(params_to_json(kind, back.params()), params_to_json(kind, p));
    EXPECT_EQ(back.predict_proba(blob.x.values), model.predict_proba(blob.x.values));
    EXPECT_EQ(back.to_json().dump(), text);
  }
  EXPECT_THROW(FittedModel::from_json(nlohmann::json::parse(R"({"format":"other"})")), DataError);
}

TEST(Model, KindNames) {
  for (auto k : {ModelKind::tree, ModelKind::forest, ModelKind::knn})
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  EXPECT_EQ(parse_model_kind("rf"), ModelKind::forest);
  EXPECT_FALSE(parse_model_kind("svm"));
}

TEST(Metrics, WorkedConfusion) {
  auto m = Metrics::from_confusion({9, 1, 1, 9});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.9);
  EXPECT_DOUBLE_EQ(m.precision, 0.9);
  EXPECT_DOUBLE_EQ(m.recall, 0.9);
  EXPECT_DOUBLE_EQ(m.f1, 0.9);

  auto none = Metrics::from_confusion({0, 0, 5, 5});
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
}

TEST(Metrics, ConfusionFromProbabilities) {
  std::vector<double> p{0.9, 0.5, 0.49, 0.1, 0.7};
  std::vector<std::uint8_t> y{1, 0, 1, 0, 1};
  auto c = confusion_from(p, y);
  EXPECT_EQ(c, (Confusion{2, 1, 1, 1}));
  std::vector<std::uint8_t> short_y{1};
  EXPECT_THROW(confusion_from(p, short_y), ShapeError);
}

TEST(Metrics, RandomTablesAreSelfConsistent) {
  Rng rng(17);
  for (int t = 0; t < 500; ++t) {
    Confusion c{rng.index(50) + 1, rng.index(50), rng.index(50), rng.index(50)};
    auto m = Metrics::from_confusion(c);
    const double prec = double(c.tp) / double(c.tp + c.fp);
    const double rec = double(c.tp) / double(c.tp + c.fn);
    EXPECT_NEAR(m.f1, 2 * prec * rec / (prec + rec), 1e-12);
    EXPECT_NEAR(m.accuracy, double(c.tp + c.tn) / double(c.total()), 1e-12);
    EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-12);
    EXPECT_GE(m.f1, std::min(m.precision, m.recall) - 1e-12);
  }
}

TEST(Metrics, EmptyLabelsAreDataError) {
  auto blob = random_blob(10, 2, 1);
  auto model = fit_model(ModelKind::tree, {}, blob.x, blob.y, 0);
  Matrix empty(0, 2);
  EXPECT_THROW(evaluate(model, empty, {}), DataError);
}

TEST(Folds, BalancedTenRows) {
  std::vector<std::uint8_t> y{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  auto folds = kfold_indices(y, 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(y[f[0]] + y[f[1]], 1);
  }
}

TEST(Folds, PartitionAndStratification) {
  Rng rng(3);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 20 + rng.index(200);
    const std::size_t k = 2 + rng.index(9);
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = rng.bernoulli(0.3) ? 1 : 0;
    std::size_t pos = std::count(y.begin(), y.end(), 1);
    if (pos < k || n - pos < k) continue;
    auto folds = kfold_indices(y, k, t);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0, plo = n, phi = 0;
    for (const auto& f : folds) {
      for (auto i : f) ++seen[i];
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      std::size_t p = 0;
      for (auto i : f) p += y[i];
      plo = std::min(plo, p);
      phi = std::max(phi, p);
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    EXPECT_LE(hi - lo, 1u);
    EXPECT_LE(phi - plo, 1u);
    EXPECT_EQ(folds, kfold_indices(y, k, t));
  }
}

TEST(Folds, Errors) {
  std::vector<std::uint8_t> y{0, 0, 0, 1, 1};
  EXPECT_THROW(kfold_indices(y, 3, 0), DataError);
  EXPECT_THROW(kfold_indices(y, 1, 0), ConfigError);
}

TEST(Tuner, SingleRoundAndBestDominates) {
  auto spec = make_preset("planted", 8);
  auto [data, truth] = generate(spec, 300, 100);
  TunerConfig cfg;
  cfg.rounds = 1;
  cfg.folds = 3;
  cfg.seed = 4;
  cfg.space.n_trees = {5, 10};
  auto one = random_search(ModelKind::forest, data, EncoderMode::hybrid, cfg);
  ASSERT_EQ(one.trials.size(), 1u);
  EXPECT_EQ(one.best, one.trials[0].params);
  EXPECT_EQ(one.best_score, one.trials[0].mean_accuracy);

  cfg.rounds = 6;
  cfg.rescreen_folds = {4};
  auto many = random_search(ModelKind::forest, data, EncoderMode::hybrid, cfg);
  for (const auto& t : many.trials) EXPECT_GE(many.best_score, t.mean_accuracy);
  ASSERT_EQ(many.fold_settings.size(), 2u);
  EXPECT_EQ(many.fold_settings[1].fold_accuracy.size(), 4u);
  EXPECT_NEAR(many.combined_accuracy,
              (many.fold_settings[0].mean_accuracy + many.fold_settings[1].mean_accuracy) / 2,
              1e-12);
  for (const auto& t : many.trials) {
    EXPECT_GE(t.params.n_trees, 5u);
    EXPECT_LE(t.params.n_trees, 10u);
  }
}

TEST(Tuner, FailedTrialsAreRecordedNotChosen) {
  auto spec = make_preset("planted", 9);
  auto [data, truth] = generate(spec, 60, 100);
  TunerConfig cfg;
  cfg.rounds = 12;
  cfg.folds = 3;
  cfg.space.k = {1, 400};  // most draws exceed the 40 training rows
  auto report = random_search(ModelKind::knn, data, EncoderMode::hybrid, cfg);
  std::size_t failed = 0;
  for (const auto& t : report.trials) {
    if (t.failed) {
      ++failed;
      EXPECT_FALSE(t.error.empty());
    }
  }
  EXPECT_GT(failed, 0u);
  EXPECT_FALSE(report.trials[report.best_index].failed);

  cfg.space.k = {300, 400};
  EXPECT_THROW(random_search(ModelKind::knn, data, EncoderMode::hybrid, cfg), FitError);
  cfg.space.k = {5, 2};
  EXPECT_THROW(random_search(ModelKind::knn, data, EncoderMode::hybrid, cfg), ConfigError);
  cfg.space.k = {1, 5};
  cfg.folds = 1;
  EXPECT_THROW(random_search(ModelKind::knn, data, EncoderMode::hybrid, cfg), ConfigError);
}
