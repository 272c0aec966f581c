// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gssl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image or grid dimensions outside the supported range.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data. The message carries the byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed but unusable data (missing classes, unknown ids, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class CompositionError : public Error {
 public:
  using Error::Error;
};

}  // namespace gssl
