#include "tabx/learning.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tabx/error.hpp"
#include "tabx/parallel.hpp"
#include "tabx/random.hpp"

namespace tabx {
namespace {

constexpr int kFormatVersion = 1;

// Training columns mapped to the index of their value among the sorted
// distinct values of that column. Splits only need this ordering, so one
// binning is shared by every tree of a forest.
struct BinnedColumns {
  std::size_t rows = 0;
  std::vector<std::vector<double>> values;
  std::vector<std::uint32_t> bins;  // column-major

  std::span<const std::uint32_t> column(std::size_t c) const {
    return {bins.data() + c * rows, rows};
  }
};

BinnedColumns bin_columns(const Matrix& x) {
  BinnedColumns out;
  out.rows = x.rows;
  out.values.resize(x.cols);
  out.bins.resize(x.rows * x.cols);
  parallel_for(x.cols, [&](std::size_t c) {
    std::vector<double> v(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) v[r] = x(r, c);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::size_t r = 0; r < x.rows; ++r) {
      const auto it = std::lower_bound(v.begin(), v.end(), x(r, c));
      out.bins[c * x.rows + r] = static_cast<std::uint32_t>(it - v.begin());
    }
    out.values[c] = std::move(v);
  });
  return out;
}

struct SplitCandidate {
  std::size_t column = 0;
  std::uint32_t last_left_bin = 0;
  double threshold = 0.0;
  double score = -1.0;
};

// Gini tree growth on binned columns. Candidate columns are scanned in
// ascending order and thresholds in ascending order; a later candidate wins
// only with a strictly larger score, which breaks ties toward the lowest
// column and then the lowest threshold.
class TreeBuilder {
 public:
  TreeBuilder(const BinnedColumns& binned, std::span<const std::uint8_t> y,
              const ModelParams& params, std::size_t max_features, Rng* rng)
      : binned_(binned), y_(y), params_(params), max_features_(max_features), rng_(rng) {
    columns_.resize(binned.values.size());
    for (std::size_t c = 0; c < columns_.size(); ++c) columns_[c] = c;
  }

  DecisionTree build(std::vector<std::uint32_t> sample) {
    sample_ = std::move(sample);
    nodes_.clear();
    grow(0, sample_.size(), 0);
    return DecisionTree(std::move(nodes_));
  }

 private:
  std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    std::uint32_t counts[2] = {0, 0};
    for (std::size_t i = begin; i < end; ++i) ++counts[y_[sample_[i]]];
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(TreeNode{-1, 0.0, -1, -1, counts[0], counts[1]});

    const std::size_t n = end - begin;
    if (depth >= params_.max_depth || counts[0] == 0 || counts[1] == 0 ||
        n < 2 * params_.min_leaf) {
      return id;
    }
    const SplitCandidate best = find_split(begin, end, counts);
    const double parent_score =
        (double(counts[0]) * counts[0] + double(counts[1]) * counts[1]) / double(n);
    if (best.score <= parent_score + 1e-12 * double(n)) return id;

    const auto col = binned_.column(best.column);
    const auto mid = std::partition(sample_.begin() + begin, sample_.begin() + end,
                                    [&](std::uint32_t r) { return col[r] <= best.last_left_bin; });
    const auto split = static_cast<std::size_t>(mid - sample_.begin());

    nodes_[id].feature = static_cast<std::int32_t>(best.column);
    nodes_[id].threshold = best.threshold;
    const std::int32_t left = grow(begin, split, depth + 1);
    const std::int32_t right = grow(split, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  std::span<const std::size_t> candidate_columns() {
    const std::size_t m = columns_.size();
    if (max_features_ >= m || rng_ == nullptr) return columns_;
    // Partial Fisher-Yates over the persistent permutation, then sorted so the
    // scan order stays ascending.
    for (std::size_t i = 0; i < max_features_; ++i) {
      std::swap(columns_[i], columns_[i + rng_->index(m - i)]);
    }
    chosen_.assign(columns_.begin(), columns_.begin() + max_features_);
    std::sort(chosen_.begin(), chosen_.end());
    return chosen_;
  }

  SplitCandidate find_split(std::size_t begin, std::size_t end, const std::uint32_t counts[2]) {
    SplitCandidate best;
    const std::size_t n = end - begin;
    const double min_leaf = static_cast<double>(params_.min_leaf);
    for (std::size_t c : candidate_columns()) {
      const std::size_t nb = binned_.values[c].size();
      if (nb < 2) continue;
      const auto col = binned_.column(c);

      // Gather per-bin class counts for the bins present in this node, in
      // ascending bin order.
      present_.clear();
      if (nb <= 4 * n) {
        hist_[0].assign(nb, 0);
        hist_[1].assign(nb, 0);
        for (std::size_t i = begin; i < end; ++i) {
          const auto r = sample_[i];
          ++hist_[y_[r]][col[r]];
        }
        for (std::uint32_t b = 0; b < nb; ++b) {
          if (hist_[0][b] + hist_[1][b] > 0) present_.push_back({b, hist_[0][b], hist_[1][b]});
        }
      } else {
        pairs_.clear();
        for (std::size_t i = begin; i < end; ++i) {
          const auto r = sample_[i];
          pairs_.push_back((std::uint64_t(col[r]) << 1) | y_[r]);
        }
        std::sort(pairs_.begin(), pairs_.end());
        for (auto key : pairs_) {
          const auto b = static_cast<std::uint32_t>(key >> 1);
          if (present_.empty() || present_.back().bin != b) present_.push_back({b, 0, 0});
          ++(key & 1 ? present_.back().positives : present_.back().negatives);
        }
      }
      if (present_.size() < 2) continue;

      double left0 = 0, left1 = 0;
      for (std::size_t k = 0; k + 1 < present_.size(); ++k) {
        left0 += present_[k].negatives;
        left1 += present_[k].positives;
        const double nl = left0 + left1;
        const double nr = double(n) - nl;
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        const double right0 = counts[0] - left0;
        const double right1 = counts[1] - left1;
        const double score =
            (left0 * left0 + left1 * left1) / nl + (right0 * right0 + right1 * right1) / nr;
        if (score > best.score) {
          const auto& v = binned_.values[c];
          best.column = c;
          best.last_left_bin = present_[k].bin;
          best.threshold = v[present_[k].bin] + (v[present_[k + 1].bin] - v[present_[k].bin]) / 2;
          best.score = score;
        }
      }
    }
    return best;
  }

  struct BinCount {
    std::uint32_t bin;
    std::uint32_t negatives;
    std::uint32_t positives;
  };

  const BinnedColumns& binned_;
  std::span<const std::uint8_t> y_;
  const ModelParams& params_;
  std::size_t max_features_;
  Rng* rng_;

  std::vector<std::uint32_t> sample_;
  std::vector<TreeNode> nodes_;
  std::vector<std::size_t> columns_;
  std::vector<std::size_t> chosen_;
  std::vector<std::uint32_t> hist_[2];
  std::vector<BinCount> present_;
  std::vector<std::uint64_t> pairs_;
};

void validate_params(ModelKind kind, const ModelParams& p, std::size_t n) {
  if (kind == ModelKind::knn) {
    if (p.k < 1 || p.k > n)
      throw ConfigError(fmt::format("k-NN needs 1 <= k <= {} training rows, got k={}", n, p.k));
    return;
  }
  if (p.max_depth < 1) throw ConfigError("max_depth must be at least 1");
  if (p.min_leaf < 1) throw ConfigError("min_leaf must be at least 1");
  if (kind == ModelKind::forest && p.n_trees < 1) throw ConfigError("n_trees must be at least 1");
}

KnnIndex build_knn(const ModelParams& params, const EncodedMatrix& x,
                   std::span<const std::uint8_t> y) {
  KnnIndex index;
  index.k = params.k;
  const auto& m = x.values;
  index.center.assign(m.cols, 0.0);
  index.scale.assign(m.cols, 1.0);
  for (std::size_t c = 0; c < m.cols; ++c) {
    if (!x.is_numeric(c)) continue;
    double mean = 0;
    for (std::size_t r = 0; r < m.rows; ++r) mean += m(r, c);
    mean /= double(m.rows);
    double var = 0;
    for (std::size_t r = 0; r < m.rows; ++r) var += (m(r, c) - mean) * (m(r, c) - mean);
    const double sd = std::sqrt(var / double(m.rows));
    index.center[c] = mean;
    index.scale[c] = sd > 0 ? sd : 1.0;
  }
  index.train = Matrix(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      index.train(r, c) = (m(r, c) - index.center[c]) / index.scale[c];
    }
  }
  index.labels.assign(y.begin(), y.end());
  return index;
}

double knn_predict(const KnnIndex& index, std::span<const double> x) {
  const std::size_t n = index.train.rows;
  const std::size_t m = index.train.cols;
  std::vector<double> q(m);
  for (std::size_t c = 0; c < m; ++c) q[c] = (x[c] - index.center[c]) / index.scale[c];
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = index.train.row(r);
    double d = 0;
    for (std::size_t c = 0; c < m; ++c) d += (row[c] - q[c]) * (row[c] - q[c]);
    dist[r] = {d, r};
  }
  // Lexicographic (distance, row) ordering breaks distance ties by row index.
  std::nth_element(dist.begin(), dist.begin() + (index.k - 1), dist.end());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < index.k; ++i) positives += index.labels[dist[i].second];
  return double(positives) / double(index.k);
}

nlohmann::ordered_json tree_to_json(const DecisionTree& tree) {
  nlohmann::ordered_json j;
  std::vector<std::int32_t> feature, left, right;
  std::vector<double> threshold;
  std::vector<std::uint32_t> neg, pos;
  for (const auto& node : tree.nodes()) {
    feature.push_back(node.feature);
    threshold.push_back(node.threshold);
    left.push_back(node.left);
    right.push_back(node.right);
    neg.push_back(node.negatives);
    pos.push_back(node.positives);
  }
  j["feature"] = feature;
  j["threshold"] = threshold;
  j["left"] = left;
  j["right"] = right;
  j["negatives"] = neg;
  j["positives"] = pos;
  return j;
}

DecisionTree tree_from_json(const nlohmann::json& j, std::size_t width) {
  const auto feature = j.at("feature").get<std::vector<std::int32_t>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<std::int32_t>>();
  const auto right = j.at("right").get<std::vector<std::int32_t>>();
  const auto neg = j.at("negatives").get<std::vector<std::uint32_t>>();
  const auto pos = j.at("positives").get<std::vector<std::uint32_t>>();
  const std::size_t n = feature.size();
  if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n ||
      neg.size() != n || pos.size() != n)
    throw DataError("model file: inconsistent tree arrays");
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = {feature[i], threshold[i], left[i], right[i], neg[i], pos[i]};
    if (feature[i] >= 0) {
      const auto in_range = [&](std::int32_t c) { return c > std::int32_t(i) && c < std::int32_t(n); };
      if (std::size_t(feature[i]) >= width || !in_range(left[i]) || !in_range(right[i]))
        throw DataError("model file: malformed tree node");
    } else if (neg[i] + pos[i] == 0) {
      throw DataError("model file: empty leaf");
    }
  }
  return DecisionTree(std::move(nodes));
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::tree: return "tree";
    case ModelKind::forest: return "forest";
    case ModelKind::knn: return "knn";
  }
  return "tree";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
  if (text == "tree" || text == "dt") return ModelKind::tree;
  if (text == "forest" || text == "rf") return ModelKind::forest;
  if (text == "knn") return ModelKind::knn;
  return std::nullopt;
}

nlohmann::ordered_json params_to_json(ModelKind kind, const ModelParams& p) {
  nlohmann::ordered_json j;
  switch (kind) {
    case ModelKind::forest:
      j["n_trees"] = p.n_trees;
      j["bootstrap"] = p.bootstrap;
      [[fallthrough]];
    case ModelKind::tree:
      j["max_depth"] = p.max_depth;
      j["min_leaf"] = p.min_leaf;
      j["max_features"] = p.max_features;
      break;
    case ModelKind::knn:
      j["k"] = p.k;
      break;
  }
  return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p;
  p.n_trees = j.value("n_trees", p.n_trees);
  p.bootstrap = j.value("bootstrap", p.bootstrap);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.min_leaf = j.value("min_leaf", p.min_leaf);
  p.max_features = j.value("max_features", p.max_features);
  p.k = j.value("k", p.k);
  return p;
}

std::size_t DecisionTree::leaf_index(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].leaf()) {
    const auto& node = nodes_[i];
    i = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
  }
  return i;
}

double DecisionTree::predict_positive(std::span<const double> x) const {
  const auto& leaf = nodes_[leaf_index(x)];
  return double(leaf.positives) / double(leaf.positives + leaf.negatives);
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> depth(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, depth[i]);
    if (!nodes_[i].leaf()) {
      depth[nodes_[i].left] = depth[i] + 1;
      depth[nodes_[i].right] = depth[i] + 1;
    }
  }
  return deepest;
}

double FittedModel::predict_positive_row(std::span<const double> x) const {
  if (kind_ == ModelKind::knn) return knn_predict(*knn_, x);
  double sum = 0;
  for (const auto& tree : trees_) sum += tree.predict_positive(x);
  return sum / double(trees_.size());
}

std::vector<double> FittedModel::predict_positive(std::span<const double> rows,
                                                  std::size_t n) const {
  if (rows.size() != n * width_)
    throw ShapeError(fmt::format("model expects {} columns, got {} values for {} rows", width_,
                                 rows.size(), n));
  std::vector<double> out(n);
  const std::size_t chunk = kind_ == ModelKind::knn ? 8 : 128;
  parallel_for((n + chunk - 1) / chunk, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * chunk);
    for (std::size_t i = b * chunk; i < end; ++i) {
      out[i] = predict_positive_row(rows.subspan(i * width_, width_));
    }
  });
  return out;
}

Matrix FittedModel::predict_proba(const Matrix& x) const {
  if (x.cols != width_)
    throw ShapeError(fmt::format("model expects {} columns, got {}", width_, x.cols));
  const auto p = predict_positive(x.data, x.rows);
  Matrix out(x.rows, 2);
  for (std::size_t i = 0; i < x.rows; ++i) {
    out(i, 0) = 1.0 - p[i];
    out(i, 1) = p[i];
  }
  return out;
}

nlohmann::ordered_json FittedModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "tabx-model";
  j["version"] = kFormatVersion;
  j["kind"] = to_string(kind_);
  j["width"] = width_;
  j["params"] = params_to_json(kind_, params_);
  if (kind_ == ModelKind::knn) {
    nlohmann::ordered_json k;
    k["k"] = knn_->k;
    k["center"] = knn_->center;
    k["scale"] = knn_->scale;
    k["rows"] = knn_->train.rows;
    k["train"] = knn_->train.data;
    k["labels"] = knn_->labels;
    j["knn"] = std::move(k);
  } else {
    auto trees = nlohmann::ordered_json::array();
    for (const auto& t : trees_) trees.push_back(tree_to_json(t));
    j["trees"] = std::move(trees);
  }
  return j;
}

FittedModel FittedModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "tabx-model") throw DataError("not a model document");
    if (j.at("version").get<int>() != kFormatVersion)
      throw DataError(fmt::format("unsupported model format version {}", j.at("version").dump()));
    FittedModel m;
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw DataError("unknown model kind");
    m.kind_ = *kind;
    m.width_ = j.at("width").get<std::size_t>();
    m.params_ = params_from_json(j.at("params"));
    if (m.kind_ == ModelKind::knn) {
      const auto& k = j.at("knn");
      KnnIndex index;
      index.k = k.at("k").get<std::size_t>();
      index.center = k.at("center").get<std::vector<double>>();
      index.scale = k.at("scale").get<std::vector<double>>();
      const auto rows = k.at("rows").get<std::size_t>();
      index.train = Matrix(rows, m.width_);
      index.train.data = k.at("train").get<std::vector<double>>();
      index.labels = k.at("labels").get<std::vector<std::uint8_t>>();
      if (index.center.size() != m.width_ || index.scale.size() != m.width_ ||
          index.train.data.size() != rows * m.width_ || index.labels.size() != rows ||
          index.k < 1 || index.k > rows)
        throw DataError("model file: inconsistent k-NN index");
      m.knn_ = std::move(index);
    } else {
      for (const auto& t : j.at("trees")) m.trees_.push_back(tree_from_json(t, m.width_));
      if (m.trees_.empty()) throw DataError("model file: no trees");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

FittedModel fit_model(ModelKind kind, const ModelParams& params, const EncodedMatrix& x,
                      std::span<const std::uint8_t> y, std::uint64_t seed) {
  const std::size_t n = x.values.rows;
  if (y.size() != n)
    throw ShapeError(fmt::format("{} labels for {} rows", y.size(), n));
  if (n < 2) throw FitError("need at least 2 training rows");
  std::size_t positives = 0;
  for (auto v : y) positives += v ? 1 : 0;
  if (positives == 0 || positives == n) throw FitError("training labels contain a single class");
  validate_params(kind, params, n);

  FittedModel model;
  model.kind_ = kind;
  model.params_ = params;
  model.width_ = x.values.cols;
  if (kind == ModelKind::knn) {
    model.knn_ = build_knn(params, x, y);
    return model;
  }

  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = y[i] ? 1 : 0;
  const BinnedColumns binned = bin_columns(x.values);
  const std::size_t m = x.values.cols;

  if (kind == ModelKind::tree) {
    const std::size_t max_features = params.max_features == 0 ? m : params.max_features;
    Rng rng(derive_seed(seed, 0));
    TreeBuilder builder(binned, labels, params, max_features, &rng);
    std::vector<std::uint32_t> sample(n);
    for (std::size_t i = 0; i < n; ++i) sample[i] = static_cast<std::uint32_t>(i);
    model.trees_.push_back(builder.build(std::move(sample)));
    return model;
  }

  const std::size_t max_features =
      params.max_features == 0
          ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))))
          : params.max_features;
  model.trees_.resize(params.n_trees);
  parallel_for(params.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    std::vector<std::uint32_t> sample(n);
    for (std::size_t i = 0; i < n; ++i) {
      sample[i] = static_cast<std::uint32_t>(params.bootstrap ? rng.index(n) : i);
    }
    TreeBuilder builder(binned, labels, params, max_features, &rng);
    model.trees_[t] = builder.build(std::move(sample));
  });
  return model;
}

}  // namespace tabx
