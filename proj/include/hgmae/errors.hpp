#pragma once

#include <stdexcept>
#include <string>

namespace hgmae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numeric argument is outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A computation has no well-defined value (e.g. every row excluded).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input file. The message names the file and line.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a data-model invariant.
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

/// Bad configuration key, value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Evaluation protocol cannot be satisfied by the data (too few labels, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace hgmae
