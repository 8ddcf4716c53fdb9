// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sllm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates its precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input is mathematically degenerate (zero vector, empty sequence, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Two structures that must agree do not (stale tape, missing key, ...).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or corrupted file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Payload checksum does not match the stored one.
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace sllm
