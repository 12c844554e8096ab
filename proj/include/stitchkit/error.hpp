#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stitchkit {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not compose (matmul inner dims, conv channels, layer inputs).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, failed factorizations.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration (empty label map, bad hyperparameters, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// A joint whose layer kinds are not linear->linear, conv->conv or conv->linear.
class UnsupportedJointError : public Error {
 public:
  using Error::Error;
};

// CKA on an input that is constant across samples.
class DegenerateInputError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Malformed `.snet` container; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace stitchkit
