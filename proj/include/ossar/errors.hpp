#pragma once

#include <stdexcept>
#include <string>

namespace ossar {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid dimensions, hyperparameters or flags.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent data (labels, files, splits).
class DataError : public Error {
public:
    using Error::Error;
};

/// Input that is well-formed but mathematically degenerate (e.g. a zero-norm vector under cosine).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Non-finite values appeared during computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An API was called out of contract (stale cache, empty batch).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Metric inputs that cannot be evaluated, e.g. only one of known/unknown present.
class EvaluationError : public Error {
public:
    using Error::Error;
};

}  // namespace ossar
