// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace asmil {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, all-dropped mask, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  /// Same error with `prefix` (e.g. a file path) in front of the message.
  ParseError prefixed(const std::string& prefix) const {
    return ParseError(Raw{}, prefix + what(), line_);
  }

 private:
  struct Raw {};
  ParseError(Raw, const std::string& what, std::size_t line) : Error(what), line_(line) {}
  std::size_t line_;
};

/// Structurally valid input with inconsistent content (e.g. feature dimension drift).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace asmil
