#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace znneig {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// A time query outside a flow's declared span.
class SpanError : public Error {
public:
    using Error::Error;
};

/// A query between the recorded instants of a sampled (file-backed) flow.
class InterpolationError : public SpanError {
public:
    using SpanError::SpanError;
};

class AsymmetryError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A finite-difference rule that violates its defining constraints.
class FormulaError : public Error {
public:
    using Error::Error;
};

/// Malformed input files.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or arguments, detected before any computation.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A numerical failure inside the time loop, tagged with the step index.
class StepError : public Error {
public:
    StepError(std::size_t step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

} // namespace znneig
