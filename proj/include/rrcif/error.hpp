#pragma once

#include <stdexcept>
#include <string>

namespace rrcif {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. The message names the offending line or field.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that violates a data invariant (NaN sample, rr out of range, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Argument outside its documented domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

class UnsupportedRateError : public Error {
public:
    using Error::Error;
};

/// Not enough beats or samples to carry out the requested stage.
class InsufficientSignalError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class EmptyFusionError : public Error {
public:
    using Error::Error;
};

/// Pearson correlation is undefined because one coordinate has zero variance.
class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rrcif
