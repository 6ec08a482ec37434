// Copyright 2026 The bpfl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace bpfl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or architectures that do not line up.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Value outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// API called in the wrong order (e.g. backward before forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment or generator parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated checkpoint.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Rethrows the in-flight exception with `context` prepended, keeping its type.
/// Must be called from inside a catch block.
[[noreturn]] void rethrow_with_context(const std::string& context);

}  // namespace bpfl
