#pragma once

#include <stdexcept>
#include <string>

namespace erapt {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration or precondition violated by the caller's parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed, or a degenerate geometric quantity.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File content does not follow the documented format.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace erapt
