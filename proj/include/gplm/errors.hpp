#pragma once

#include <stdexcept>
#include <string>

namespace gplm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (mean parameter,
/// response support, negative deviance, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// V(mu) <= 0 where a Pearson residual was requested.
class DegenerateVarianceError : public DomainError {
public:
    using DomainError::DomainError;
};

/// A truncated series could not reach the requested tail precision.
class PrecisionError : public Error {
public:
    using Error::Error;
};

/// No sample point carries positive kernel weight at the query point.
class EmptyWindowError : public Error {
public:
    EmptyWindowError(double t, double h)
        : Error("empty kernel window at t=" + std::to_string(t) + " (h=" + std::to_string(h) + ")"),
          t_(t),
          h_(h) {}

    double t() const noexcept { return t_; }
    double h() const noexcept { return h_; }

private:
    double t_;
    double h_;
};

/// Denominator of a derivative ratio vanished.
class IllConditionedError : public Error {
public:
    using Error::Error;
};

/// Degenerate design (constant covariate, p = 0, mismatched sizes).
class DesignError : public Error {
public:
    using Error::Error;
};

/// Input data failed validation (CSV shape, response support, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An optimizer produced an inconsistent result (e.g. a null fit beating the
/// nested full fit).
class OptimizationError : public Error {
public:
    using Error::Error;
};

}  // namespace gplm
