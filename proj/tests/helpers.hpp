#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <unistd.h>

#include "tabx/dataset.hpp"
#include "tabx/schema.hpp"

namespace tabx::test {

inline std::shared_ptr<const FeatureSchema> schema_from(const std::string& text) {
  return std::make_shared<const FeatureSchema>(parse_schema(text));
}

inline Dataset csv_from(const std::string& text, std::shared_ptr<const FeatureSchema> schema) {
  std::istringstream in(text);
  return read_csv(in, std::move(schema));
}

// Small mixed schema: ordinal, nominal, numeric predictors.
inline const char* kSmallSchema =
    "Vaccine Trust\tordinal\tC\t1|2|3|4|5\n"
    "gender\tnominal\tB\tmale|female\n"
    "age\tnumeric\tB\n"
    "decision\tnominal\t-\trefuse|accept\n"
    "!target\tdecision\taccept\n";

// Fresh scratch directory under the system temp path.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("tabx_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace tabx::test
