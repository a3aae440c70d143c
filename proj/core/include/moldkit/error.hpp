#pragma once

#include <stdexcept>
#include <string>

namespace moldkit {

// Base for every failure raised by the library. Precondition violations on
// caller-supplied arguments use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent on-disk data (containers, caches, manifests,
// images, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared where only finite values are allowed.
class NumericFault : public Error {
 public:
  using Error::Error;
};

// Metric that has no defined value for the given input (e.g. AP without
// positives).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

}  // namespace moldkit
