#pragma once

#include <stdexcept>
#include <string>

namespace spectragen {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand extents are inconsistent with the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed input files, invalid arguments, violated preconditions.
class DataError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity appeared where finite values are required.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace spectragen
