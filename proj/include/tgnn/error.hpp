#pragma once

#include <stdexcept>
#include <string>

namespace tgnn {

// Error categories surfaced by the library. The C API maps each one onto a
// distinct status code, so new categories need a matching code in tgnn.h.

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A dense materialization would exceed the size guard.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Non-finite values or solver failure.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; the message names file and line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace tgnn
