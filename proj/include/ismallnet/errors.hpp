#pragma once

#include <stdexcept>
#include <string>

namespace ismallnet {

/// Tensor or image dimensions violate an operation's precondition.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value (unknown variant, bad weights, ...).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A dataset file is missing or unreadable.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A dataset file was read but its content is not acceptable.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input lies outside the domain of a numeric function.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct SynthesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Raised by the trainer when the loss stops being finite.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ismallnet
