#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace triplesurv {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller handed us something that violates a documented precondition.
// The CLI maps this family (and its subclasses) to exit code 2.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Malformed input data. `row` is the 1-based data row (header excluded),
// or 0 when the problem is not tied to a row (e.g. a missing column).
class ParseError : public InvalidArgument {
 public:
  ParseError(const std::string& what, std::size_t row = 0)
      : InvalidArgument(row > 0 ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Fewer than two distinct event times; no time grid can be built.
class DegenerateGrid : public Error {
 public:
  using Error::Error;
};

// A metric with an empty support (no comparable pairs, no evaluable times).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

// NaN/Inf showed up where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace triplesurv
