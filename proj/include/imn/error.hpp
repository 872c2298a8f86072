#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image geometry does not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read, decoded or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or tensor file failed its magic, version or CRC check.
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration text. `line()` is 1-based, 0 when not tied to a line.
class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Training aborted (undersized dataset, non-finite loss term, ...).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace imn
