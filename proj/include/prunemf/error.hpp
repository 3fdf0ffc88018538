#pragma once

#include <stdexcept>
#include <string>

namespace prunemf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value. The message names the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Unreadable or malformed input data, or bad checkpoint files.
class DataError : public Error {
public:
    using Error::Error;
};

/// A non-finite value appeared during training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace prunemf
