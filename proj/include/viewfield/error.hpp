#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace viewfield {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input supplied by a caller (invalid parameters, malformed files).
/// The CLI maps these onto exit code 1.
class UserError : public Error {
 public:
  using Error::Error;
};

/// A data structure violates one of its invariants.
class ValidationError : public UserError {
 public:
  using UserError::UserError;
};

/// Text could not be parsed. `offset()` is a byte offset into the input for
/// expression/target strings, or a line number for line-oriented files.
class ParseError : public UserError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : UserError(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Numerical failure during optimization (e.g. a non-finite loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace viewfield
