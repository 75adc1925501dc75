#pragma once

#include <stdexcept>
#include <string>

namespace rorl {

/// Input or parameter dimensions do not chain.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Optimizer was handed non-finite gradients.
class OptimizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the caller's arguments was violated.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration key/value could not be accepted. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation needs something the agent does not have (e.g. critics).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required on-disk artifact is missing or malformed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix was expected to be positive definite but is not.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, double min_eigenvalue)
      : std::runtime_error(what + " (min eigenvalue " + std::to_string(min_eigenvalue) + ")"),
        min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

/// Training produced a non-finite loss. Maps to exit code 3.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, std::string snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const std::string& snapshot() const { return snapshot_; }

 private:
  std::string snapshot_;
};

}  // namespace rorl
