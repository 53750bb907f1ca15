#pragma once

#include <stdexcept>
#include <string>

namespace ignet {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Convolution/pooling extents that do not fit the input they are applied to.
class GeometryError : public Error {
public:
    using Error::Error;
};

// Layer chains, traces, targets or buffers whose dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or parameters during training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// A worker of the execution pool threw; carries the first failure's message.
class StageError : public Error {
public:
    using Error::Error;
};

} // namespace ignet
