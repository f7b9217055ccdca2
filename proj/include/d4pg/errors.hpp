#pragma once

#include <stdexcept>

namespace d4pg {

// Invalid hyperparameters or experiment configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Tensor / vector dimensions disagree with a network or support.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf reached a place where it would corrupt state.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct NotEnoughData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint / frame decoding failure.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace d4pg
