#pragma once

#include <stdexcept>
#include <string>

namespace ssa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An argument is outside its documented domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A layer or run configuration is inconsistent (e.g. non-positive output dims).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An operation was invoked without the state it depends on.
class StateError : public Error {
public:
    using Error::Error;
};

/// Input band count exceeds the nested capacity c_max of the model.
class BandOverflowError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// Requested output is smaller than the input (only upscaling is supported).
class UnsupportedScaleError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// A band has zero mean, so relative errors are undefined.
class DegenerateBandError : public Error {
public:
    DegenerateBandError(const std::string& what, int band) : Error(what), band_(band) {}
    int band() const noexcept { return band_; }

private:
    int band_;
};

/// Malformed, truncated or version-mismatched file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace ssa
