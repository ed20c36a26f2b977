#pragma once

#include <stdexcept>
#include <string>

namespace lqreg {

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (dimension mismatch, out-of-domain data, bad file).
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values (q too small, sup|f| + noise > M, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a numerical routine that failed to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A linear solve failed. Carries the reciprocal condition estimate of the system.
class SolverError : public NumericalError {
public:
    SolverError(const std::string& what, double rcond)
        : NumericalError(what + " (rcond estimate " + std::to_string(rcond) + ")"), rcond_(rcond) {}

    double rcond() const noexcept { return rcond_; }

private:
    double rcond_;
};

} // namespace lqreg
