#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include <json.hpp>

#include "tabx/encoding.hpp"
#include "tabx/learning.hpp"

namespace tabx {

// What both explainers see of a model: a scalar score per raw record
// (schema-ordered cells, level indices for categoricals). For trained
// pipelines the score is P(accept).
class BlackBox {
 public:
  virtual ~BlackBox() = default;
  virtual std::size_t num_features() const = 0;
  // `rows` holds out.size() records back to back.
  virtual void score(std::span<const double> rows, std::span<double> out) const = 0;

  double score_one(std::span<const double> row) const {
    double out = 0;
    score(row, {&out, 1});
    return out;
  }
};

// Encoder + classifier: the deployable unit the CLI saves and explains.
class Pipeline : public BlackBox {
 public:
  Pipeline(FittedEncoder encoder, FittedModel model);

  const FittedEncoder& encoder() const { return encoder_; }
  const FittedModel& model() const { return model_; }

  std::size_t num_features() const override { return encoder_.schema().size(); }
  void score(std::span<const double> rows, std::span<double> out) const override;

  nlohmann::ordered_json to_json() const;
  static Pipeline from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Pipeline load(const std::string& path);

 private:
  FittedEncoder encoder_;
  FittedModel model_;
};

// Wraps a plain function of one record; used for analytic test models.
class FunctionModel : public BlackBox {
 public:
  using Fn = std::function<double(std::span<const double>)>;
  FunctionModel(std::size_t num_features, Fn fn)
      : num_features_(num_features), fn_(std::move(fn)) {}

  std::size_t num_features() const override { return num_features_; }
  void score(std::span<const double> rows, std::span<double> out) const override {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = fn_(rows.subspan(i * num_features_, num_features_));
    }
  }

 private:
  std::size_t num_features_;
  Fn fn_;
};

}  // namespace tabx
