#pragma once

#include <stdexcept>
#include <string>

namespace qftlab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: violated precondition, malformed descriptor, invalid configuration.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Evaluation requested exactly on the lightcone, where the quantity is a distribution.
class DistributionalPoint : public Error {
public:
    using Error::Error;
};

/// A quadrature, extrapolation or finite-difference estimate did not meet its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A lattice run whose signal reached the outer boundary or whose step violated CFL.
class LatticeError : public Error {
public:
    using Error::Error;
};

/// A source-dependent quantity was found outside the causal future of the source.
class CausalityViolation : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what)
{
    if (!ok) throw InvalidArgument(what);
}

} // namespace detail
} // namespace qftlab
