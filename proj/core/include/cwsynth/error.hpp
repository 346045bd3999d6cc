#pragma once

#include <stdexcept>
#include <string>

namespace cwsynth {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: IO failure, malformed CSV, schema mismatch.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape disagreement between matrices or graph nodes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a numerically invalid request.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cwsynth
