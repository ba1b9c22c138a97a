#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace have {

// Base for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input: malformed files, wrong dimensions, violated preconditions.
// The CLI maps these to exit code 1.
class InputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class TruncationError : public InputError {
 public:
  TruncationError(const std::string& what, std::uint64_t offset)
      : InputError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class NumericError : public InputError {
 public:
  using InputError::InputError;
};

class DomainError : public InputError {
 public:
  using InputError::InputError;
};

class TraceExhaustedError : public InputError {
 public:
  using InputError::InputError;
};

// A postcondition the library itself guarantees did not hold. Exit code 2.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace have
