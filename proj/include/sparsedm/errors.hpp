#pragma once

#include <stdexcept>
#include <string>

namespace sparsedm {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix does not satisfy (or cannot carry) an N:M pattern.
class PatternError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Loss diverged during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Two models that must share an architecture do not.
class ArchitectureError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// The 2:4 compressed inference path was requested on an incompatible model.
class CompressedPathError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported checkpoint/config file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparsedm
