#pragma once

#include <stdexcept>
#include <string>

namespace sgan {

/// Incompatible tensor or image extents.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Payload does not fit the container at the configured rate.
class CapacityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable, unsupported or lossy file format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf reached a loss, gradient or parameter.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sgan
