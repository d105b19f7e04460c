#pragma once

#include <stdexcept>
#include <string>

namespace cidml {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments to a library call (counts, ranges, shape mismatches).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Problems with input data files or their contents.
class DataError : public Error {
 public:
  using Error::Error;
};

// A required column is missing or the file layout is wrong.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// A cell value violates the data model (non-binary treatment, NaN, ...).
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

// Invalid pipeline or study configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An estimation stage cannot produce a result on this data.
class EstimationError : public Error {
 public:
  using Error::Error;
};

// A linear system is singular or a computation lost all precision.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cidml
