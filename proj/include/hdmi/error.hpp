#pragma once

#include <stdexcept>
#include <string>

namespace hdmi {

// Base class for all engine errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files or rows.
struct ParseError : Error {
  using Error::Error;
};

// Invalid or infeasible configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Model fitting failed (no events, non-convergence, degenerate response).
struct FitError : Error {
  using Error::Error;
};

// Rank-deficient or otherwise singular design.
struct SingularityError : FitError {
  using FitError::FitError;
};

// Coefficients diverging (monotone likelihood / separation).
struct DivergenceError : FitError {
  using FitError::FitError;
};

// Event-rate calibration target unattainable.
struct CalibrationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace hdmi
