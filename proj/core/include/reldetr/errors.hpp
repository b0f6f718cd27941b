#pragma once

#include <stdexcept>
#include <string>

namespace reldetr {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand extents do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf reached a place that requires finite values.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed user input: files, boxes, configuration values.
class InputError : public Error {
public:
    using Error::Error;
};

}  // namespace reldetr
