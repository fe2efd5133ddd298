#pragma once

#include <stdexcept>
#include <string>

namespace depthfuse {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated a precondition: bad shapes, empty inputs, out-of-range options.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Byte stream could not be decoded at all (corrupt or truncated file).
class CodecError : public Error {
public:
    using Error::Error;
};

/// Stream decoded fine but is not the kind of file we accept (wrong bit depth, channels).
class FormatError : public Error {
public:
    using Error::Error;
};

/// A value cannot be represented in the target encoding.
class RangeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf or other numerical contract violation inside a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure; message names the path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training diverged; message names the iteration.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace depthfuse
