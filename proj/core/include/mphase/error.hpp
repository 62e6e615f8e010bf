#pragma once

#include <stdexcept>
#include <string>

namespace mphase {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument: wrong dimension, out-of-range option, malformed input.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// No admissible segmentation exists for the requested number of change-points.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// The model violates the nonzero-jump identifiability condition.
class IdentifiabilityError : public Error {
 public:
  using Error::Error;
};

/// Quadrature did not converge, a matrix is singular, residuals are degenerate.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A Monte Carlo experiment lost more replications than its failure budget allows.
class FailureBudgetError : public Error {
 public:
  FailureBudgetError(const std::string& what, int failures, int attempts)
      : Error(what), failures_(failures), attempts_(attempts) {}

  int failures() const noexcept { return failures_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int failures_;
  int attempts_;
};

}  // namespace mphase
