#pragma once

// l^q coefficient penalty, the regularized least-squares objective over the
// coefficient vector, and the exact scalar proximal map of tau |.|^q.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "error.hpp"
#include "kernel.hpp"

namespace lqreg {

/// Exponents below this are rejected: |a|^q degenerates towards a counting measure.
inline constexpr double min_penalty_exponent = 0.05;

struct PenaltySpec {
    double q = 1.0;
    double lambda = 1.0;

    PenaltySpec(double exponent, double weight) : q(exponent), lambda(weight) {
        if (!std::isfinite(q) || q < min_penalty_exponent) {
            throw ConfigError("penalty exponent q must be >= " + std::to_string(min_penalty_exponent) +
                              ", got " + std::to_string(q));
        }
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw ConfigError("regularization weight lambda must be positive, got " + std::to_string(lambda));
        }
    }
};

namespace detail {

inline double abs_pow(double t, double q) {
    const double a = std::abs(t);
    if (q == 1.0) {
        return a;
    }
    if (q == 2.0) {
        return a * a;
    }
    return a == 0.0 ? 0.0 : std::pow(a, q);
}

} // namespace detail

/// sum_i |a_i|^q
template <class V>
double penalty_value(const Eigen::MatrixBase<V>& a, double q) {
    if (!(q > 0.0)) {
        throw ConfigError("penalty exponent must be positive");
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        s += detail::abs_pow(a[i], q);
    }
    return s;
}

/// (1/m) |G a - y|^2 + lambda sum |a_i|^q
template <class V>
double objective(const Eigen::MatrixBase<V>& a, const Matrix& gram, const Vector& y, const PenaltySpec& spec) {
    if (gram.rows() != gram.cols() || gram.rows() != y.size() || a.size() != y.size()) {
        throw InputError("objective: dimension mismatch between coefficients, Gram matrix and outputs");
    }
    const double m = static_cast<double>(y.size());
    const double fit = (gram * a.derived() - y).squaredNorm() / m;
    return fit + spec.lambda * penalty_value(a, spec.q);
}

namespace detail {

/// h(a) = 1/2 (a - v)^2 + tau |a|^q
inline double prox_objective(double a, double v, double tau, double q) {
    const double d = a - v;
    return 0.5 * d * d + tau * abs_pow(a, q);
}

inline constexpr double prox_derivative_tol = 1e-12;
inline constexpr double prox_interval_tol = 1e-14;

/// Root of the increasing function phi on [lo, hi] with phi(lo) <= 0 <= phi(hi).
/// Newton steps, falling back to bisection whenever Newton leaves the bracket.
template <class Phi, class DPhi>
double bracketed_newton(Phi phi, DPhi dphi, double lo, double hi, double start, double scale) {
    double a = std::clamp(start, lo, hi);
    const double ftol = prox_derivative_tol * std::max(1.0, scale);
    for (int it = 0; it < 400; ++it) {
        const double f = phi(a);
        if (std::abs(f) <= ftol) {
            return a;
        }
        if (f < 0.0) {
            lo = a;
        } else {
            hi = a;
        }
        if (hi - lo <= prox_interval_tol * std::max(1.0, hi)) {
            return 0.5 * (lo + hi);
        }
        const double df = dphi(a);
        double next = (df > 0.0 && std::isfinite(df)) ? a - f / df : lo - 1.0;
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        a = next;
    }
    return a;
}

/// Positive minimizer magnitude for |v| = w > 0, q > 1: root of a + q tau a^(q-1) = w.
inline double prox_magnitude_convex(double w, double tau, double q) {
    auto phi = [&](double a) { return a + q * tau * std::pow(a, q - 1.0) - w; };
    auto dphi = [&](double a) { return 1.0 + q * (q - 1.0) * tau * std::pow(a, q - 2.0); };
    // a = w / (1 + q tau w^(q-2)) is exact for q = 2 and a good start nearby.
    const double start = w / (1.0 + q * tau * std::pow(w, q - 2.0));
    return bracketed_newton(phi, dphi, 0.0, w, start, w);
}

/// Global minimizer magnitude for |v| = w > 0 and 0 < q < 1.
/// g(a) = a + q tau a^(q-1) is convex on a > 0 with minimum at a_min; the larger
/// root of g(a) = w is the only candidate local minimizer besides 0.
inline double prox_magnitude_nonconvex(double w, double tau, double q) {
    const double a_min = std::pow(q * (1.0 - q) * tau, 1.0 / (2.0 - q));
    auto g = [&](double a) { return a + q * tau * std::pow(a, q - 1.0); };
    if (g(a_min) >= w) {
        return 0.0;
    }
    auto phi = [&](double a) { return g(a) - w; };
    auto dphi = [&](double a) { return 1.0 + q * (q - 1.0) * tau * std::pow(a, q - 2.0); };
    const double root = bracketed_newton(phi, dphi, a_min, w, w, w);
    return prox_objective(root, w, tau, q) < prox_objective(0.0, w, tau, q) ? root : 0.0;
}

/// Closed-form half thresholding: largest root of s^3 - w s + tau/2 = 0 with a = s^2,
/// selected only above the global threshold 1.5 tau^(2/3).
inline double prox_magnitude_half(double w, double tau) {
    if (w <= 1.5 * std::cbrt(tau * tau)) {
        return 0.0;
    }
    const double c = (tau / 4.0) * std::pow(3.0 / w, 1.5);
    const double phi = std::acos(std::clamp(c, -1.0, 1.0));
    return (2.0 / 3.0) * w * (1.0 + std::cos(2.0 * std::numbers::pi / 3.0 - (2.0 / 3.0) * phi));
}

} // namespace detail

/// argmin_a 1/2 (a - v)^2 + tau |a|^q, exact for every q > 0.
///
/// Odd in v by construction (computed on |v|, sign restored). For q < 1 an
/// exact tie between 0 and the nonzero candidate resolves to 0.
inline double prox_scalar(double v, double tau, double q) {
    if (!(tau > 0.0)) {
        throw ConfigError("prox step tau must be positive");
    }
    if (!(q > 0.0)) {
        throw ConfigError("prox exponent q must be positive");
    }
    const double w = std::abs(v);
    if (w == 0.0) {
        return 0.0;
    }
    double mag;
    if (q == 1.0) {
        mag = std::max(w - tau, 0.0);
    } else if (q == 2.0) {
        mag = w / (1.0 + 2.0 * tau);
    } else if (q == 0.5) {
        mag = detail::prox_magnitude_half(w, tau);
    } else if (q > 1.0) {
        mag = detail::prox_magnitude_convex(w, tau, q);
    } else {
        mag = detail::prox_magnitude_nonconvex(w, tau, q);
    }
    return std::signbit(v) ? -mag : mag;
}

} // namespace lqreg
