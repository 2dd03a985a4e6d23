#include "tabx/blackbox.hpp"

#include <fstream>
#include <memory>

#include <fmt/format.h>

#include "tabx/error.hpp"

namespace tabx {

Pipeline::Pipeline(FittedEncoder encoder, FittedModel model)
    : encoder_(std::move(encoder)), model_(std::move(model)) {
  if (encoder_.width() != model_.width())
    throw ShapeError(fmt::format("encoder produces {} columns, model expects {}",
                                 encoder_.width(), model_.width()));
}

void Pipeline::score(std::span<const double> rows, std::span<double> out) const {
  const std::size_t n = out.size();
  const Matrix x = encoder_.encode_rows(rows, n);
  const auto p = model_.predict_positive(x.data, n);
  std::copy(p.begin(), p.end(), out.begin());
}

nlohmann::ordered_json Pipeline::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "tabx-pipeline";
  j["version"] = 1;
  j["encoding"] = to_string(encoder_.mode());
  j["schema"] = serialize_schema(encoder_.schema());
  j["model"] = model_.to_json();
  return j;
}

Pipeline Pipeline::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "tabx-pipeline") throw DataError("not a pipeline document");
    if (j.at("version").get<int>() != 1) throw DataError("unsupported pipeline version");
    const auto mode = parse_encoder_mode(j.at("encoding").get<std::string>());
    if (!mode) throw DataError("unknown encoding in pipeline document");
    auto schema = std::make_shared<const FeatureSchema>(
        parse_schema(j.at("schema").get<std::string>()));
    return Pipeline(FittedEncoder::fit(std::move(schema), *mode),
                    FittedModel::from_json(j.at("model")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("pipeline document: ") + e.what());
  }
}

void Pipeline::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file '" + path + "'");
  out << to_json().dump() << '\n';
  if (!out) throw IoError("failed writing model file '" + path + "'");
}

Pipeline Pipeline::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace tabx
