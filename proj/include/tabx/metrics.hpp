#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include <json.hpp>

#include "tabx/learning.hpp"
#include "tabx/matrix.hpp"

namespace tabx {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// Positive class = accept. Precision, recall and F1 are 0 when their
// denominators vanish.
struct Metrics {
  Confusion counts;
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  static Metrics from_confusion(const Confusion& c);
};

Confusion confusion_from(std::span<const double> p_positive, std::span<const std::uint8_t> y);

// Threshold 0.5 on P(positive). Throws DataError on empty labels.
Metrics evaluate(const FittedModel& model, const Matrix& x, std::span<const std::uint8_t> y);

nlohmann::ordered_json metrics_to_json(const Metrics& m);

}  // namespace tabx
