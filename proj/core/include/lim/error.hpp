#pragma once

#include <stdexcept>

namespace lim {

// Base for every error thrown by the library. Subtypes exist so callers can
// map failure classes to distinct exit codes without parsing messages.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand extents do not line up (e.g. matmul inner dimensions).
struct ShapeError : Error {
  using Error::Error;
};

// Input is outside an operation's documented domain (empty vector, step size
// out of range, too-small image, ...).
struct DomainError : Error {
  using Error::Error;
};

// Input is structurally valid but unusable: near-zero vector handed to a
// normalizer, a class absent from a training split, and similar.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Token id outside the encoder's vocabulary.
struct VocabularyError : Error {
  using Error::Error;
};

// A documented caller-side precondition was violated (non-unit rows handed to
// the loss, confidence weights outside (0,1], ...).
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required: divergent training steps,
// unstable finite-difference probes.
struct NumericError : Error {
  using Error::Error;
};

// File-system and serialization failures.
struct IoError : Error {
  using Error::Error;
};

// A frame's aspect ratio cannot be standardized to the target extents.
struct StandardizationError : Error {
  using Error::Error;
};

// Malformed or inconsistent run configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace lim
