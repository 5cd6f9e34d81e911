#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adgs2s {

/// Precondition on a caller-supplied value was violated (unknown node id,
/// out-of-range target, nonpositive schedule argument, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor or parameter dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Text input could not be parsed. Carries a 1-based position.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Graph construction rejected its input (duplicate names, undeclared types,
/// cyclic hierarchy, scale guard).
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A serialized artifact (graph dump, checkpoint, embedding table) is
/// malformed or truncated.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, const std::string& message)
      : std::runtime_error("step " + std::to_string(step) + ": " + message), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Bad command-line usage or configuration file content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adgs2s
