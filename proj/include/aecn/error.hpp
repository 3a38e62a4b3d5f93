#pragma once

#include <stdexcept>
#include <string>

namespace aecn {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not conform to an operation's contract.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Inputs that are well-formed but violate a precondition (empty sets, bad labels, ranges).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Inconsistent model, training or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation not available for this model (e.g. classifier without a head).
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures; the message names the path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed bytes in an image, manifest or checkpoint.
class ParseError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public ParseError {
public:
    using ParseError::ParseError;
};

class UnsupportedVersionError : public ParseError {
public:
    using ParseError::ParseError;
};

class LengthMismatchError : public ParseError {
public:
    using ParseError::ParseError;
};

class TrailingBytesError : public ParseError {
public:
    using ParseError::ParseError;
};

class ChecksumError : public ParseError {
public:
    using ParseError::ParseError;
};

} // namespace aecn
