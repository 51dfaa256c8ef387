#pragma once

#include <stdexcept>
#include <string>

namespace univ {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input that makes an operation undefined (zero-norm rows, non-stochastic rows, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, missing file, or broken data contract.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace univ
