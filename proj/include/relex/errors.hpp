#pragma once

#include <stdexcept>
#include <string>

namespace relex {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unusable run configuration: bad flag values, missing required settings,
// referenced paths that do not exist.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data. Messages carry file and line where known.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values where finite math was required (diverged training, bad grads).
struct NumericError : Error {
  using Error::Error;
};

// Checkpoint failures, each its own kind so callers can tell them apart.
struct CheckpointVersionError : DataError {
  using DataError::DataError;
};
struct CheckpointHashError : DataError {
  using DataError::DataError;
};
struct CheckpointTruncatedError : DataError {
  using DataError::DataError;
};

}  // namespace relex
