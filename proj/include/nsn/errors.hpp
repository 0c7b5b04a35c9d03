#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nsn {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible matrix or vector shapes.
struct DimensionError : Error {
  using Error::Error;
};

/// Rank outside the admissible range for a layer or operation.
struct RankError : Error {
  using Error::Error;
};

/// Invalid configuration (bad keys, inconsistent ranges, impossible plans).
struct ConfigError : Error {
  using Error::Error;
};

/// File or payload problems: bad magic, truncation, out-of-range labels.
struct DataError : Error {
  using Error::Error;
};

/// Numerical failure: divergence, non-convergence of an iteration.
struct NumericalError : Error {
  NumericalError(const std::string& what, std::size_t iterations = 0)
      : Error(what), iterations(iterations) {}
  std::size_t iterations;
};

}  // namespace nsn
