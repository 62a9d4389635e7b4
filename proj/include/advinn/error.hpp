#pragma once

#include <stdexcept>
#include <string>

namespace advinn {

// Base of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an operation's rule.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain (log of a non-positive value,
// non-finite objective, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Requested item does not exist (e.g. no image of a class).
class LookupError : public Error {
 public:
  using Error::Error;
};

// Optimization produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures and missing inputs.
class IoError : public Error {
 public:
  using Error::Error;
};

// Persisted data failed validation (bad magic, checksum mismatch, ...).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace advinn
