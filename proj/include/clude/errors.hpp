#pragma once

#include <stdexcept>

namespace clude {

/// Violation of an operation precondition (shape mismatch, misuse of the tape).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid configuration value or combination.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a precondition (empty valid set, nonpositive depth, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File content does not follow the expected encoding.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Filesystem failure or misaligned file inputs.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss or activation left the finite range.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clude
