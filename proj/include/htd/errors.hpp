#pragma once

#include <stdexcept>
#include <string>

namespace htd {

// Invalid argument value (bad dof, non-positive scale, ...).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Inconsistent configuration (schedule, sampler presets, CLI flags).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values, divergent integrals, failed convergence.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Valid request that this code deliberately does not handle.
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace htd
