#pragma once

#include <stdexcept>
#include <string>

namespace plume {

// Configuration / usage problems (CLI maps these to exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures (CLI maps these to exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : ConfigError {
  using ConfigError::ConfigError;
};
struct RankTooLarge : ConfigError {
  using ConfigError::ConfigError;
};
struct StabilityViolation : NumericalError {
  using NumericalError::NumericalError;
};
struct NonFinite : NumericalError {
  using NumericalError::NumericalError;
};
struct ZeroReference : NumericalError {
  using NumericalError::NumericalError;
};
struct Diverged : NumericalError {
  using NumericalError::NumericalError;
};
struct LanczosBreakdown : NumericalError {
  using NumericalError::NumericalError;
};
struct StaleCache : std::logic_error {
  using std::logic_error::logic_error;
};
struct HashMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncatedFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace plume
