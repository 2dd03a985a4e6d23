#include "tabx/metrics.hpp"

#include <fmt/format.h>

#include "tabx/error.hpp"

namespace tabx {

Metrics Metrics::from_confusion(const Confusion& c) {
  Metrics m;
  m.counts = c;
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : double(num) / double(den);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

Confusion confusion_from(std::span<const double> p_positive, std::span<const std::uint8_t> y) {
  if (p_positive.size() != y.size())
    throw ShapeError(fmt::format("{} predictions for {} labels", p_positive.size(), y.size()));
  Confusion c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool pred = predicted_positive(p_positive[i]);
    if (y[i]) {
      ++(pred ? c.tp : c.fn);
    } else {
      ++(pred ? c.fp : c.tn);
    }
  }
  return c;
}

Metrics evaluate(const FittedModel& model, const Matrix& x, std::span<const std::uint8_t> y) {
  if (y.empty()) throw DataError("cannot evaluate on an empty label set");
  if (x.rows != y.size())
    throw ShapeError(fmt::format("{} rows for {} labels", x.rows, y.size()));
  const auto p = model.predict_positive(x.data, x.rows);
  return Metrics::from_confusion(confusion_from(p, y));
}

nlohmann::ordered_json metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["confusion"] = {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn},
                    {"tn", m.counts.tn}};
  return j;
}

}  // namespace tabx
