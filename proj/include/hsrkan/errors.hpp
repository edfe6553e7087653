#pragma once

#include <stdexcept>
#include <string>

namespace hsrkan {

// Incompatible tensor shapes or extents.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Invalid user-facing configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite values or other runtime numerical failure (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed .hsc / checkpoint / CSV input.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Misuse of the autograd tape (double backward, non-scalar loss, ...).
class AutogradError : public std::logic_error {
 public:
  explicit AutogradError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace hsrkan
