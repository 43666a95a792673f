#pragma once

#include <stdexcept>
#include <string>

namespace fbsde {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid inputs detected before any computation (bad grid, empty basis, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed experiment configuration; message lists the offending keys.
struct SchemaError : ConfigError {
  using ConfigError::ConfigError;
};

// NaN/inf encountered while integrating a path; message names step and path.
struct SimulationError : Error {
  using Error::Error;
};

// Rank-deficient design matrix (or similar) in the least-squares stage.
struct RegressionError : Error {
  using Error::Error;
};

// R + D*PD (or another gain denominator) is too ill-conditioned to invert.
struct GainError : Error {
  using Error::Error;
};

// Riccati solution lost positive semidefiniteness beyond tolerance.
struct PositivityError : Error {
  using Error::Error;
};

}  // namespace fbsde
