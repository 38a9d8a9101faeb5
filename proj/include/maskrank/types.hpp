#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace maskrank {

// All numerics in this library are 64-bit. Embeddings are column vectors,
// feature sets are row-major matrices (one feature per row).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A documented precondition or invariant was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

/// l2 normalization (or pooling) hit a vector with norm below epsilon.
struct DegenerateVectorError : ContractError {
  using ContractError::ContractError;
};

/// A numerical oracle (finite differences) could not be evaluated.
struct OracleError : Error {
  using Error::Error;
};

/// Malformed file content (manifest, raster, feature file, checkpoint).
struct FormatError : Error {
  using Error::Error;
};

/// The dataset cannot satisfy the requested operation (e.g. batch spec).
struct InsufficientDataError : Error {
  using Error::Error;
};

/// Invalid configuration (CLI flags, config JSON, inconsistent shapes).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace maskrank
