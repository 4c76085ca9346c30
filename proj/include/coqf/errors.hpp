#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coqf {

/// Invalid caller-supplied values: negative amounts, malformed weights,
/// inconsistent configuration.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structured failure while reading a text input.  line is 1-based; 0 means
/// the location is unknown or not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message
                                    : message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// The population cannot support a welfare comparison (optimal funding is
/// zero); callers typically resample and retry.
class DegeneratePopulationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Filesystem trouble: unreadable input, unwritable output.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coqf
