// errors.hpp - exception types shared across the library
#pragma once

#include <stdexcept>
#include <string>

namespace mpo {

// Invalid configuration: bad dimensions, out-of-range hyper-parameters,
// missing required inputs.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input outside the mathematical domain of an operation.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical procedure failed to reach its target (quadrature, solver).
struct NumericalError : std::runtime_error {
  NumericalError(const std::string& msg, double residual)
      : std::runtime_error(msg), residual(residual) {}
  double residual;
};

// Malformed file contents; `line` is 1-based.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"),
        line(line) {}
  int line;
};

// Training aborted (non-finite loss).
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mpo
