#pragma once

#include <stdexcept>
#include <string>

namespace cloaklab {

/// Base for every error raised by the library. The CLI maps
/// `ValidationError` to exit status 1 and all others to exit status 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed configuration, parameters outside the
/// admissible range, unknown keys.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A point outside the domain where an operation is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Evaluation at a singular argument (z = 0 for Hankel functions,
/// coincident points for Green's functions).
class SingularArgumentError : public Error {
public:
    using Error::Error;
};

/// Result would overflow double precision.
class RangeError : public Error {
public:
    using Error::Error;
};

/// A series or iteration failed to reach the requested accuracy.
class PrecisionError : public Error {
public:
    using Error::Error;
};

/// Evaluation at (or numerically indistinguishable from) a pole of the
/// Drude-Lorentz coefficient.
class PoleError : public Error {
public:
    using Error::Error;
};

/// The adaptive radial integrator could not advance.
class IntegrationError : public Error {
public:
    using Error::Error;
};

/// Argument-principle bookkeeping could not be resolved on a box edge.
class InconclusiveError : public Error {
public:
    using Error::Error;
};

} // namespace cloaklab
