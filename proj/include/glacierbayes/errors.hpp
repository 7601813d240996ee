#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace glacier {

// Bad inputs: wrong shapes, out-of-range values, malformed files.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Linear-algebra or root-finding breakdowns that survive the configured
// recovery attempts (e.g. Cholesky failure after jitter escalation).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed text input; remembers the 1-based line it came from.
class ParseError : public ValidationError {
public:
  ParseError(const std::string& msg, std::size_t line)
      : ValidationError(msg + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

}  // namespace glacier
