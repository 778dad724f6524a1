#pragma once

#include <stdexcept>
#include <string>

namespace ohfs {

/// Bad input: dimension mismatches, malformed files, out-of-range parameters.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A linear system or estimator could not produce a result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The regularized Laplacian system has no unique solution (gamma = 0 and an
/// unlabeled component never reaches a labeled vertex).
class SingularSystemError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Snapshot payload that cannot be decoded.
class CorruptPayloadError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class VersionMismatchError : public CorruptPayloadError {
 public:
  using CorruptPayloadError::CorruptPayloadError;
};

}  // namespace ohfs
