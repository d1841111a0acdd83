#pragma once

#include <stdexcept>
#include <string>

namespace codemix {

// Base for every error the library raises. The CLI maps the subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or index mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, precondition violation on user-supplied settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing or inconsistent data (datasets, checkpoints, labels).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace codemix
