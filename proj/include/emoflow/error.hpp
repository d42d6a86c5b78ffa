#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emoflow {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. `location` is a 1-based line (text) or byte offset (binary).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what + " (at " + std::to_string(location) + ")"), location_(location) {}
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Degenerate input geometry: zero-length segment, scene with no usable points.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class EmptyEvaluationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state during integration or optimization.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::ptrdiff_t index = -1)
      : Error(what), index_(index) {}
  /// Offending event index (warp) or iteration (trainer); -1 when unknown.
  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

}  // namespace emoflow
