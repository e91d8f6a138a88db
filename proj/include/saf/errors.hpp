#pragma once

#include <stdexcept>
#include <string>

namespace saf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or layer widths.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, model dimensions or config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: bad labels, non-normalised distributions, empty sets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training-mode batch normalisation on fewer than two rows.
class BatchError : public Error {
 public:
  using Error::Error;
};

/// Object used in the wrong state, e.g. an optimizer step without gradients.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Text input (CSV, parameter files) that does not parse.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace saf
