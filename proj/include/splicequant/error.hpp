#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace splicequant {

/// Malformed or inconsistent user input. Carries the 1-based line number when
/// the problem is attributable to a single row of an input file.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, std::int64_t line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::int64_t line() const noexcept { return line_; }

 private:
  std::int64_t line_;
};

/// Input that is well formed but does not contain what an estimator needs
/// (e.g. no single-variant genes to fit the start distribution).
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure inside a model computation for one island.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace splicequant
