#pragma once

#include <stdexcept>
#include <string>

namespace hsomrl
{
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Incompatible operand shapes; the message names the op and both shapes.
    class ShapeError : public Error
    {
    public:
        using Error::Error;
    };

    /// Input outside an op's mathematical domain (log of non-positive, zero-norm row, non-finite result).
    class DomainError : public Error
    {
    public:
        using Error::Error;
    };

    /// A caller-side precondition was violated (empty list, missing positives, bad config value).
    class PreconditionError : public Error
    {
    public:
        using Error::Error;
    };

    class IoError : public Error
    {
    public:
        using Error::Error;
    };

    /// Malformed or inconsistent on-disk data.
    class FormatError : public Error
    {
    public:
        using Error::Error;
    };

    class SchemaError : public FormatError
    {
    public:
        using FormatError::FormatError;
    };

    class ChainError : public FormatError
    {
    public:
        using FormatError::FormatError;
    };

    class CountMismatchError : public FormatError
    {
    public:
        using FormatError::FormatError;
    };

    class ChecksumError : public FormatError
    {
    public:
        using FormatError::FormatError;
    };

    class MissingManifestError : public FormatError
    {
    public:
        using FormatError::FormatError;
    };

    /// Invalid run configuration: unknown key, bad value, bad flag.
    class ConfigError : public Error
    {
    public:
        using Error::Error;
    };

    /// A required input (dataset, checkpoint, embeddings file) does not exist.
    class MissingInputError : public Error
    {
    public:
        using Error::Error;
    };

    /// Another process holds the output directory.
    class LockError : public Error
    {
    public:
        using Error::Error;
    };
}
