#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tabx/encoding.hpp"
#include "tabx/matrix.hpp"

namespace tabx {

enum class ModelKind { tree, forest, knn };

std::string_view to_string(ModelKind kind);
// Accepts "tree", "forest"/"rf", "knn".
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct ModelParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 16;
  std::size_t min_leaf = 1;
  // Columns examined per split; 0 selects ceil(sqrt(m)) for forests and all
  // columns for single trees.
  std::size_t max_features = 0;
  bool bootstrap = true;
  std::size_t k = 5;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

nlohmann::ordered_json params_to_json(ModelKind kind, const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

// Predicted label for a positive-class probability.
inline bool predicted_positive(double p_positive) { return p_positive >= 0.5; }

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // rows with x[feature] <= threshold go left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t negatives = 0;
  std::uint32_t positives = 0;

  bool leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t leaf_index(std::span<const double> x) const;
  double predict_positive(std::span<const double> x) const;
  std::size_t depth() const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct KnnIndex {
  std::size_t k = 1;
  std::vector<double> center;  // 0 for non-numeric columns
  std::vector<double> scale;   // 1 for non-numeric columns
  Matrix train;                // standardized training matrix
  std::vector<std::uint8_t> labels;
};

// Trained binary classifier over an encoded matrix. Class order is
// (negative, positive).
class FittedModel {
 public:
  ModelKind kind() const { return kind_; }
  const ModelParams& params() const { return params_; }
  std::size_t width() const { return width_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  // n x 2 matrix of (P(negative), P(positive)).
  Matrix predict_proba(const Matrix& x) const;
  // P(positive) for n rows stored contiguously; throws ShapeError on width mismatch.
  std::vector<double> predict_positive(std::span<const double> rows, std::size_t n) const;
  double predict_positive_row(std::span<const double> x) const;

  nlohmann::ordered_json to_json() const;
  static FittedModel from_json(const nlohmann::json& j);

 private:
  friend FittedModel fit_model(ModelKind, const ModelParams&, const EncodedMatrix&,
                               std::span<const std::uint8_t>, std::uint64_t);

  ModelKind kind_ = ModelKind::tree;
  ModelParams params_;
  std::size_t width_ = 0;
  std::vector<DecisionTree> trees_;
  std::optional<KnnIndex> knn_;
};

// Throws FitError for single-class labels or fewer than 2 rows, ConfigError for
// invalid parameters. Deterministic per seed at any thread count.
FittedModel fit_model(ModelKind kind, const ModelParams& params, const EncodedMatrix& x,
                      std::span<const std::uint8_t> y, std::uint64_t seed);

}  // namespace tabx
