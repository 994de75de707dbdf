#pragma once

#include <stdexcept>
#include <string>

namespace cupcur {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or oversize sequences.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid user-supplied configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// Token / target index out of range.
struct IndexError : Error {
    using Error::Error;
};

// Operation called in a state that does not support it (missing snapshot,
// diverged training, fully pruned tensor).
struct StateError : Error {
    using Error::Error;
};

// Bad input data (empty corpus, too-short stream, empty sample).
struct InputError : Error {
    using Error::Error;
};

// An internal structural invariant was violated (mask misalignment,
// length mismatch).
struct InvariantError : Error {
    using Error::Error;
};

// API misuse (e.g. backward on a non-scalar).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace cupcur
