#pragma once

#include <stdexcept>
#include <string>

namespace rmgn {

/// Tensor shapes or resolutions that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value violates a domain invariant (NaN, out-of-range entry, bad count).
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raster file could not be read or written.
class ImageIOError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Key-value file problems. `line` is 0 when the error is not tied to a line
/// (for example a missing key).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Training produced a NaN/Inf objective.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rmgn
