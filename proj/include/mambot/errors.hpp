#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mambot {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent user input (files, schemas, arguments).
class InputError : public Error {
public:
    using Error::Error;
};

/// Operands of a geometric operation live in different dimensions.
class DimensionError : public InputError {
public:
    using InputError::InputError;
};

/// A text format could not be parsed; carries the 1-based line number.
class ParseError : public InputError {
public:
    ParseError(std::size_t line, const std::string& what)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Numerical or modelling failure (singular fit, undecided LP, unachievable tolerance).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The simplex hit its iteration limit; emptiness could not be decided.
class LpUndecided : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A linear objective is unbounded over a polytope.
class UnboundedError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace mambot
