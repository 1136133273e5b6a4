#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evcnn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stream I/O

class MalformedRecord : public Error {
public:
    /// `position` is a 1-based line for text input and a byte offset for binary input.
    MalformedRecord(const std::string& what, std::size_t position)
        : Error(what + " (at " + std::to_string(position) + ")"), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class NonMonotoneTimestamp : public Error {
public:
    using Error::Error;
};

class CoordinateOutOfBounds : public Error {
public:
    using Error::Error;
};

class ZeroWindow : public Error {
public:
    ZeroWindow() : Error("window length must be positive") {}
};

// Numerics and layer state

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

class TimestampRegression : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class StaleState : public Error {
public:
    using Error::Error;
};

// Network assembly

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class MissingTensor : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Data generation

class EmptyScene : public Error {
public:
    using Error::Error;
};

class NonPositiveIntensity : public Error {
public:
    using Error::Error;
};

}  // namespace evcnn
