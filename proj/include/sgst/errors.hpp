#pragma once

#include <stdexcept>
#include <string>

namespace sgst {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An argument lies outside the mathematical domain of the function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input data (JSON, dataset lines) could not be ingested.
class IngestionError : public Error {
 public:
  using Error::Error;
};

// A configured size limit (max vertices, max length) was exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Checkpoint bytes are malformed, truncated or of the wrong version.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgst
