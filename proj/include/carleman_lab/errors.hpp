#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace carleman_lab {

/// Argument outside an operation's documented domain.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A structural precondition of an operation does not hold for the given data
/// (e.g. a boundary value that must vanish does not).
class PreconditionViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Exponential weight not representable in double precision.
class RangeError : public std::range_error {
 public:
  RangeError(const std::string& what, double s, double lambda, double max_psi)
      : std::range_error(what), s_(s), lambda_(lambda), max_psi_(max_psi) {}

  double s() const noexcept { return s_; }
  double lambda() const noexcept { return lambda_; }
  double max_psi() const noexcept { return max_psi_; }

 private:
  double s_;
  double lambda_;
  double max_psi_;
};

/// Iterative solver stopped before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residual_history() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

}  // namespace carleman_lab
