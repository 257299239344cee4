#pragma once

#include <stdexcept>
#include <string>

namespace nlrecon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Matrix/vector shapes disagree with the hierarchy or with each other.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A constraint function was evaluated outside its domain (e.g. a ratio
/// with a vanishing denominator) or produced a non-finite value.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A factorization or iterative solve failed beyond the allowed recovery.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Invalid user configuration (CLI flags, JSON config, file schemas).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace nlrecon
