#pragma once

#include <stdexcept>
#include <string>

namespace kanerva {

/// Base class of every error raised by the library. `exit_code()` follows the
/// CLI convention: 2 config, 3 numeric, 4 I/O.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Factorisation failed even after the jitter ladder.
class NotPSD : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Scalar innovation variance of an online write is not positive.
class DegenerateVariance : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonFinite : public NumericError {
 public:
  using NumericError::NumericError;
};

class CounterOverflow : public NumericError {
 public:
  using NumericError::NumericError;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class LengthMismatch : public DimensionMismatch {
 public:
  using DimensionMismatch::DimensionMismatch;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class CheckpointMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class EmptyDataset : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace kanerva
