#pragma once

#include <stdexcept>
#include <string>

namespace mnngp {

// Error taxonomy. The CLI maps each class to its own exit code.

/// Caller violated an operation's usage contract (bad shapes, bad flags).
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a numerical routine.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Malformed file or stream contents.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Zero-norm input reaching a layer with sigma_b2 == 0 (0/0 correlation).
class DegenerateInputError : public std::runtime_error {
public:
  DegenerateInputError(const std::string& what, long row)
      : std::runtime_error(what), row_(row) {}
  long row() const noexcept { return row_; }

private:
  long row_;
};

/// Jitter escalation exhausted without a positive-definite factorization.
class ConditioningError : public std::runtime_error {
public:
  ConditioningError(const std::string& what, double final_noise)
      : std::runtime_error(what), final_noise_(final_noise) {}
  double final_noise() const noexcept { return final_noise_; }

private:
  double final_noise_;
};

/// An invariant or oracle check failed.
class ValidationFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mnngp
