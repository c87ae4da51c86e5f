#pragma once

#include <stdexcept>
#include <string>

namespace fslstm {

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or declared extents disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value or numerical breakdown (loss, gradient, intermediate).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent or physically invalid input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, arguments or usage order.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fslstm
