#pragma once

#include <stdexcept>
#include <string>

namespace qdas {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidLengthError : public Error {
public:
    using Error::Error;
};

class LengthMismatchError : public Error {
public:
    using Error::Error;
};

class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent scenario / run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Decoding could not proceed (missing peak, collision, too-short capture).
class DecodeError : public Error {
public:
    using Error::Error;
};

} // namespace qdas
