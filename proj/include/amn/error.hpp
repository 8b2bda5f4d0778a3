// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace amn {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a precondition of an API.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or hyper-parameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A metric has no defined value for the given inputs.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (unreadable input, unwritable output).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifact has an unsupported format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace amn
