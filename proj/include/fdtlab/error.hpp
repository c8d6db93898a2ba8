#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fdtlab {

/// Invalid user input: shapes, ranges, unknown keys. Maps to CLI exit code 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical routine could not produce a trustworthy answer
/// (non-finite values, singular or ill-conditioned systems).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// The requested estimator does not apply to the given perturbation.
class UnsupportedMethodError : public std::runtime_error {
 public:
  explicit UnsupportedMethodError(const std::string& what) : std::runtime_error(what) {}
};

/// A structural assumption check failed where the caller required it to pass.
/// Maps to CLI exit code 2.
class AssumptionError : public std::runtime_error {
 public:
  explicit AssumptionError(const std::string& what) : std::runtime_error(what) {}
};

/// A trajectory left the finite region (non-finite or above the ceiling).
/// Carries the last finite state so callers can report where it happened.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, Eigen::VectorXd last_finite, std::size_t step,
                  std::size_t stream = 0)
      : std::runtime_error(what),
        last_finite_(std::move(last_finite)),
        step_(step),
        stream_(stream) {}

  const Eigen::VectorXd& last_finite_state() const { return last_finite_; }
  std::size_t step() const { return step_; }
  std::size_t stream() const { return stream_; }

 private:
  Eigen::VectorXd last_finite_;
  std::size_t step_;
  std::size_t stream_;
};

}  // namespace fdtlab
