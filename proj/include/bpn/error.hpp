#pragma once

#include <stdexcept>
#include <string>

namespace bpn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape disagreement (names both shapes in the message).
struct ShapeError : Error {
    using Error::Error;
};

/// Operation called in an invalid order (e.g. backward without forward,
/// consolidating the same task twice).
struct StateError : Error {
    using Error::Error;
};

/// Invalid configuration value or method/architecture mismatch.
struct ConfigError : Error {
    using Error::Error;
};

/// Task-oracle violation: unknown or missing task id where one is required.
struct OracleError : Error {
    using Error::Error;
};

/// Malformed input file (bad magic, truncation, length mismatch).
struct FormatError : Error {
    using Error::Error;
};

/// Invalid user-supplied data (empty sample set, out-of-range label).
struct InputError : Error {
    using Error::Error;
};

/// Filesystem failure, reported with path context.
struct IoError : Error {
    using Error::Error;
};

} // namespace bpn
