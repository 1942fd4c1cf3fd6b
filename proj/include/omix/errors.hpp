#pragma once

#include <stdexcept>
#include <string>

namespace omix {

/// Base of every error raised by the library. `exit_code()` follows the CLI
/// scheme: 2 for usage/format problems, 3 for numeric failures and aborts.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    [[nodiscard]] virtual int exit_code() const noexcept { return 2; }
};

/// Caller violated a precondition (dimension mismatch, bad argument).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Input data is unusable (non-finite values, empty input).
class DataError : public Error {
public:
    using Error::Error;
};

/// A serialized model or a binary stream failed to parse or validate.
class FormatError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

/// Not enough data, or a degenerate buffer, to build an initial model.
class InitError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

/// A component's responsibility mass fell below the starvation floor and no
/// data was available to reseed it.
class StarvedComponent : public NumericError {
public:
    StarvedComponent(const std::string& what, int component)
        : NumericError(what), component_(component) {}
    [[nodiscard]] int component() const noexcept { return component_; }

private:
    int component_;
};

class EstimationAborted : public NumericError {
public:
    using NumericError::NumericError;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class SelectionError : public Error {
public:
    using Error::Error;
};

/// Metric is undefined for the given inputs (e.g. g-mean with one class).
class MetricError : public Error {
public:
    using Error::Error;
};

}  // namespace omix
