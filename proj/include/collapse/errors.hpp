#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace collapse {

/// Violated precondition on user-supplied data (dimensions, tolerances,
/// unsupported kernel/operator combinations).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure during a numerical procedure: norm collapse, positivity loss,
/// Cholesky breakdown. Carries the grid step at which it happened when known.
class NumericalError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NumericalError(const std::string& what, std::size_t step = npos)
      : std::runtime_error(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace collapse
