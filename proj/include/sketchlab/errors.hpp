#pragma once

#include <stdexcept>
#include <string>

namespace sketchlab {

/// Invalid configuration value (spec fields, lambda, policy parameters).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor or image dimensions that an operation cannot accept.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index or coordinate outside its valid range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Input data that fails a domain invariant (non-finite values, bad landmark
/// counts, malformed files).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sketchlab
