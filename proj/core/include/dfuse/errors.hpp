#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dfuse {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a precondition (bad shape, bad argument, bad flag).
// The CLI maps this to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A vector that should be L2-normalized has (near) zero norm.
class DegenerateEmbeddingError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Record parsed fine but violates a domain invariant. Carries the record id.
class ValidationError : public Error {
 public:
  ValidationError(std::string record_id, const std::string& what)
      : Error("record '" + record_id + "': " + what), record_id_(std::move(record_id)) {}
  const std::string& record_id() const noexcept { return record_id_; }

 private:
  std::string record_id_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointLayoutError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// I/O failure (cannot open, short read, rename failed).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfuse
