#pragma once

#include <stdexcept>
#include <string>

namespace poisonlab {

/// Base of every error raised by the library. The category mirrors how the
/// CLI maps failures onto exit codes and how sweep cells record failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape, index or layout mismatch (bad qubit index, wrong feature length).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Input vector cannot be amplitude-encoded.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Caller supplied an invalid argument or configuration value.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Divergence, non-convergence or a non-finite intermediate.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input file.
class IngestionError : public Error {
 public:
  using Error::Error;
};

}  // namespace poisonlab
