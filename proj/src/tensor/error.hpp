#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smcdo {

// Numeric values double as CLI exit codes for the first three categories.
enum class ErrorCode : int {
  config = 2,
  data = 3,
  numeric = 4,
  dimension = 5,
  invalid_argument = 6,
  state = 7,
  io = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DimensionError : public Error {
 public:
  DimensionError(std::string axis, std::size_t expected, std::size_t actual, const std::string& context)
      : Error(ErrorCode::dimension, context + ": " + axis + " mismatch (expected " + std::to_string(expected) +
                                        ", got " + std::to_string(actual) + ")"),
        axis_(std::move(axis)),
        expected_(expected),
        actual_(actual) {}

  /// Same error with `prefix` prepended to the message.
  DimensionError prefixed(const std::string& prefix) const {
    return DimensionError(axis_, expected_, actual_, prefix + what(), Composed{});
  }

  const std::string& axis() const noexcept { return axis_; }
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  struct Composed {};
  DimensionError(std::string axis, std::size_t expected, std::size_t actual, const std::string& message, Composed)
      : Error(ErrorCode::dimension, message), axis_(std::move(axis)), expected_(expected), actual_(actual) {}

  std::string axis_;
  std::size_t expected_;
  std::size_t actual_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCode::data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorCode::invalid_argument, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorCode::state, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

}  // namespace smcdo
