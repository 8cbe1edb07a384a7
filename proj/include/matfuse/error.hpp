#pragma once

#include <stdexcept>
#include <string>

namespace matfuse {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent arguments (bad dimensions, out-of-range labels).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during a numerical stage.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A file did not match its expected on-disk layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A problem instance exceeds a hard size limit.
class SizeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace matfuse
