#pragma once

#include <stdexcept>
#include <string>

namespace toolselect {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was broken by the caller.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class NoValidCandidate : public Error {
public:
    using Error::Error;
};

class EmptyReferenceSet : public Error {
public:
    using Error::Error;
};

class UnknownTask : public Error {
public:
    using Error::Error;
};

class InvalidPrediction : public Error {
public:
    using Error::Error;
};

class NoValidPanel : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class CorruptCheckpoint : public Error {
public:
    using Error::Error;
};

class UnsupportedVersion : public CorruptCheckpoint {
public:
    using CorruptCheckpoint::CorruptCheckpoint;
};

} // namespace toolselect
