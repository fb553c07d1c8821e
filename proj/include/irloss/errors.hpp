#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace irloss {

/// Raised when tensor or sequence dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on malformed text input. Carries the 1-based line number (0 when
/// the problem is not tied to a line, e.g. an empty file).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when training produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t stage, std::size_t epoch)
      : std::runtime_error("non-finite loss at stage " + std::to_string(stage) + ", epoch " +
                           std::to_string(epoch)),
        stage_(stage),
        epoch_(epoch) {}

  std::size_t stage() const noexcept { return stage_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t stage_;
  std::size_t epoch_;
};

}  // namespace irloss
