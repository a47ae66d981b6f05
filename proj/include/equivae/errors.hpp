#pragma once

#include <stdexcept>

namespace equivae {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or axis mismatch between tensors.
struct ShapeError : Error {
    using Error::Error;
};

/// Math domain violation: log of a non-positive value, sigma <= 0,
/// divergent KL, and the like.
struct DomainError : Error {
    using Error::Error;
};

/// API contract violation: non-scalar loss, target found inside its own
/// complementary set, empty class pool, ...
struct ContractError : Error {
    using Error::Error;
};

/// Run-config schema violation.
struct ConfigError : Error {
    using Error::Error;
};

/// A NaN or infinity surfaced where only finite values are allowed.
struct NonFiniteError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct BadMagicError : IoError {
    using IoError::IoError;
};

struct TruncatedFileError : IoError {
    using IoError::IoError;
};

struct CountMismatchError : IoError {
    using IoError::IoError;
};

struct VersionMismatchError : IoError {
    using IoError::IoError;
};

}  // namespace equivae
