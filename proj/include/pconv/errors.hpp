#pragma once

#include <stdexcept>
#include <string>

namespace pconv {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with an operation's contract. The message names
/// the offending axis.
struct ShapeError : Error {
    using Error::Error;
};

/// A precondition on values was violated (non-binary mask, non-scalar
/// backward seed, target outside {0,1}, ...).
struct ContractError : Error {
    using Error::Error;
};

/// Invalid model or run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// A numerical failure (NaN/Inf where finite values are required).
struct NumericError : Error {
    using Error::Error;
};

/// Degenerate input that makes the requested statistic undefined
/// (zero variance, constant reference histogram, ...).
struct DegenerateError : Error {
    using Error::Error;
};

/// A bounded stochastic generator could not satisfy its constraints.
struct GenerationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct BadMagicError : IoError {
    using IoError::IoError;
};

struct TruncatedError : IoError {
    using IoError::IoError;
};

struct VersionError : IoError {
    using IoError::IoError;
};

/// Recognized file but unsupported variant (ASCII PGM, maxval 0, ...).
struct FormatError : IoError {
    using IoError::IoError;
};

} // namespace pconv
