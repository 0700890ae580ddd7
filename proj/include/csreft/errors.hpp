#pragma once

#include <stdexcept>
#include <string>

namespace csreft {

// Error hierarchy. Everything user-visible derives from Error so the CLI
// can map failures onto its exit-code contract.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct RankDeficient : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct HookError : Error {
    using Error::Error;
};

struct NotScalar : Error {
    using Error::Error;
};

struct NonFinite : Error {
    using Error::Error;
};

struct EmptyBatch : Error {
    using Error::Error;
};

struct NonFiniteLoss : Error {
    using Error::Error;
};

struct DimMismatch : Error {
    using Error::Error;
};

struct BudgetError : Error {
    using Error::Error;
};

// Checkpoint file errors, each distinguishable.
struct CheckpointError : Error {
    using Error::Error;
};

struct BadMagic : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct VersionMismatch : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct TruncatedFile : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace csreft
