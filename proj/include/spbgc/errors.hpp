#pragma once

#include <stdexcept>
#include <string>

namespace spbgc {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A matrix that should be symmetric positive definite failed to factorize
/// even after the one-shot jitter retry.
struct NotPositiveDefinite : Error {
  using Error::Error;
};

/// Dimensions of related arguments disagree.
struct ShapeMismatch : Error {
  using Error::Error;
};

/// Inverse-Wishart degrees of freedom must exceed dim - 1.
struct InvalidDegreesOfFreedom : Error {
  using Error::Error;
};

/// The accept-reject truncated-normal path was forced for dim > 100.
struct DimensionTooLarge : Error {
  using Error::Error;
};

/// Quantile argument outside (0, 1) or an invalid probability vector.
struct InvalidProbability : Error {
  using Error::Error;
};

/// Autocorrelation of a constant (zero-variance) chain is undefined.
struct DegenerateChain : Error {
  using Error::Error;
};

/// Chain shorter than the requested maximum lag.
struct ChainTooShort : Error {
  using Error::Error;
};

/// Malformed input file; message carries row/column context.
struct ParseError : Error {
  using Error::Error;
};

/// A cell value is incompatible with its declared column kind.
struct KindMismatch : Error {
  using Error::Error;
};

}  // namespace spbgc
