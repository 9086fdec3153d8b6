#pragma once

#include <stdexcept>
#include <string>

namespace pacnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad value in a config file or parameter struct.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mismatched or unsupported tensor/map dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Not enough samples to perform an estimation step.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Operation invoked out of order (e.g. backward without forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// File read/write failure or malformed on-disk data.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss; the message carries the epoch,
// sample and term values for the abort report.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace pacnn
