#pragma once

#include <stdexcept>
#include <string>

namespace sparsepose {

/// Non-finite or otherwise unusable argument.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A 6D code whose rows are zero or parallel cannot be orthogonalized.
class DegenerateRotation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Tensor shapes that do not fit the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration, checkpoint or dataset.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sparsepose
