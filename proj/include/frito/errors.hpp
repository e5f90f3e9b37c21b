#pragma once

#include <stdexcept>
#include <string>

namespace frito {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or dimension disagreement between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid mask state, e.g. a fully masked softmax row.
struct MaskError : Error {
    using Error::Error;
};

// A requested configuration the operation does not support
// (sparse execution with v != 1, bad spec parameters, ...).
struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct BadMagicError : IoError {
    using IoError::IoError;
};

struct BadDtypeError : IoError {
    using IoError::IoError;
};

struct TruncatedError : IoError {
    using IoError::IoError;
};

// Checkpoint container problems.
struct VersionError : IoError {
    using IoError::IoError;
};

struct CorruptError : IoError {
    using IoError::IoError;
};

}  // namespace frito
