#pragma once

#include <stdexcept>
#include <string>

namespace egu {

// Error taxonomy shared by the library and the command line tool.  Each class
// maps to a stable process exit code so scripts can distinguish failure modes:
// ConfigError -> 2, NumericError -> 3, IoError -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad knobs or malformed requests: negative sizes, out-of-range probabilities,
// unknown enum spellings, incompatible option combinations.
struct ConfigError : Error {
  using Error::Error;
};

// Shape mismatches between tensors, matrices or files.
struct DimError : ConfigError {
  using ConfigError::ConfigError;
};

// Numerical failure at runtime: NaN losses, degenerate simplexes, solvers
// that do not converge, undefined angles.
struct NumericError : Error {
  using Error::Error;
};

// Calls out of order, e.g. backward before forward.
struct StateError : Error {
  using Error::Error;
};

// File problems: missing paths, bad magic, truncated payloads.
struct IoError : Error {
  using Error::Error;
};

}  // namespace egu
