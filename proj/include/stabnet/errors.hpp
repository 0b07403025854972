// Error hierarchy shared by all modules.
//
// The command-line layer maps these onto process exit codes:
//   InputError -> 2, NumericalError -> 3, IoError (and ParseError) -> 4.
#pragma once

#include <stdexcept>
#include <string>

namespace stabnet {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments, failed validation, or violated preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

// Numerical failures: singular masked blocks, inconsistent linear systems,
// or certified non-existence results (e.g. no stable point, no equilibrium).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Filesystem problems: missing files, unwritable paths.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents; carries the 1-based line number when known.
class ParseError : public IoError {
 public:
  ParseError(const std::string& message, long line)
      : IoError(message + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& message) : IoError(message), line_(0) {}

  long line() const { return line_; }

 private:
  long line_;
};

}  // namespace stabnet
