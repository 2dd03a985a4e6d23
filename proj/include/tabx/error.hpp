#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tabx {

// Root of every error the library throws. The CLI maps each subclass to an
// exit code, so new failure kinds should derive from the closest existing one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed schema document or schema-level invariant violation.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A cell or record that does not satisfy the schema.
class DataError : public Error {
 public:
  using Error::Error;
};

// Unknown feature or level in a query (cohort filters, decode lookups).
class QueryError : public Error {
 public:
  using Error::Error;
};

// A cohort that exists but is too small to explain.
class CohortError : public Error {
 public:
  CohortError(std::size_t rows, const std::string& what)
      : Error(what), rows_(rows) {}
  std::size_t rows() const { return rows_; }

 private:
  std::size_t rows_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters for a learner, tuner, explainer or generator.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabx
