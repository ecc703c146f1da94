// Copyright 2026 The geotune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geotune {

enum class ErrorCode {
    // registry
    DuplicateName,
    InvalidName,
    NotFound,
    AmbiguousNamespace,
    // model components
    ShapeMismatch,
    DuplicateBand,
    EmptyTargetBands,
    IndexOutOfRange,
    TokenCountMismatch,
    LengthMismatch,
    PyramidShapeError,
    NoGridInput,
    KindMismatch,
    InvalidArgument,
    // factory
    ResolveError,
    ShapeIncompatibility,
    CheckpointBandMismatch,
    CheckpointMissing,
    CheckpointFormat,
    // data
    MissingSplit,
    ClassMismatchAcrossSplits,
    UnpairedImage,
    DuplicateId,
    BandCountIndivisible,
    UnknownOutputBand,
    InvalidPattern,
    InvalidMaskValue,
    RasterFormat,
    DataEmpty,
    // engine
    NonFiniteLoss,
    // config
    SyntaxError,
    UnknownKey,
    TypeError,
    CrossFieldError,
    MissingKey,
    // iterate
    NoCompletedTrials,
    BenchmarkConfigError,
    // misc
    IoError,
};

std::string_view to_string(ErrorCode code);

/// True for errors a user fixes by editing a config file (CLI exit code 1).
bool is_config_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Error carrying a source location inside a config document.
class ConfigError : public Error {
public:
    ConfigError(ErrorCode code, const std::string& message, int line = -1, int column = -1)
        : Error(code, format(message, line, column)), line_(line), column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    static std::string format(const std::string& message, int line, int column) {
        if (line < 0) {
            return message;
        }
        return message + " (line " + std::to_string(line + 1) + ", column " + std::to_string(column + 1) + ")";
    }

    int line_;
    int column_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace geotune
