#pragma once

#include <stdexcept>
#include <string>

namespace slap {

// Base of every error the library throws. The CLI maps each subclass to a
// process exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// Malformed or out-of-range configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Unreadable, inconsistent or invalid input data.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// A pipeline stage was run before (or with a stale copy of) its inputs.
class PrerequisiteError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

// NaN or Inf produced by a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

// Precondition violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace slap
