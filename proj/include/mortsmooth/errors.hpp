#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mortsmooth {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidKnots : public Error {
public:
    using Error::Error;
};

/// Penalized likelihood has a singular Hessian (no unique maximizer).
class NonIdentifiable : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

/// A true log-rate of exactly zero makes the relative metrics undefined.
class DegenerateDenominator : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line number that triggered it.
class SchemaError : public Error {
public:
    SchemaError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed file whose values break a data invariant.
class ValidationError : public SchemaError {
public:
    using SchemaError::SchemaError;
};

}  // namespace mortsmooth
