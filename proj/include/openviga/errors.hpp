// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace openviga {

// Process exit codes used by the CLI.
enum class ExitCode : int {
    kSuccess = 0,
    kConfigError = 2,
    kNumericalFailure = 3,
    kStructuralViolation = 4,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::kConfigError; }
};

// Invalid or inconsistent configuration (also: missing plugins, bad ranks).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor or image shapes that do not fit together.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Rates, top-k values and similar scalar arguments out of range.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Sequence does not fit into the model context.
class LengthError : public Error {
public:
    using Error::Error;
};

// Token sequence violates the frame/marker layout.
class StructuralError : public Error {
public:
    StructuralError(const std::string& what, long position) : Error(what), position_(position) {}
    long position() const noexcept { return position_; }
    ExitCode exit_code() const noexcept override { return ExitCode::kStructuralViolation; }

private:
    long position_;
};

// NaN/Inf losses, frozen weights that moved, and similar training failures.
class NumericalError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kNumericalFailure; }
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace openviga
