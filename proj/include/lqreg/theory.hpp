#pragma once

// Hyperparameter schedules, the convolution approximant f0 = K * F of the
// mirror-extended target, the r-th modulus of smoothness and the computable
// hypothesis-error chain.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "kernel.hpp"
#include "penalty.hpp"
#include "solvers.hpp"

namespace lqreg {

struct SmoothnessSpec {
    double r = 1.0;
    double c0 = 1.0;
    int d = 1;
};

/// Which lambda exponent to use. The theorem statement and the proof section
/// of the underlying analysis disagree; both are kept.
enum class ScheduleVariant { theorem_statement, proof_section };

inline std::string_view to_string(ScheduleVariant v) {
    return v == ScheduleVariant::theorem_statement ? "theorem" : "proof";
}

inline ScheduleVariant parse_schedule_variant(std::string_view s) {
    if (s == "theorem" || s == "theorem-statement") return ScheduleVariant::theorem_statement;
    if (s == "proof" || s == "proof-section") return ScheduleVariant::proof_section;
    throw ConfigError("unknown schedule variant '" + std::string(s) + "'");
}

struct Schedule {
    double sigma;
    double lambda;
    ScheduleVariant variant;
};

/// Exponent e such that lambda = M^2 m^e.
inline double lambda_exponent(double r, int d, double q, ScheduleVariant variant) {
    const double dd = d;
    if (variant == ScheduleVariant::theorem_statement) {
        if (q <= 2.0) {
            return (-12.0 * r - 6.0 * dd + 2.0 * r * q + q * dd) / (4.0 * r + 2.0 * dd);
        }
        return -(4.0 * r + 2.0 * dd) / (2.0 * r + dd);
    }
    if (q <= 2.0) {
        return (-12.0 * r - 4.0 * dd + 2.0 * r * q + q * dd) / (4.0 * r + 2.0 * dd);
    }
    return (-4.0 * r - dd) / (2.0 * r + dd);
}

/// sigma = m^(-1/(2r+d)) and lambda = M^2 m^e per variant and q branch.
inline Schedule schedule(long long m, double r, int d, double q, double M, ScheduleVariant variant) {
    if (m < 1) {
        throw ConfigError("schedule needs m >= 1");
    }
    if (!(r > 0.0) || d < 1 || !(q > 0.0) || !(M > 0.0)) {
        throw ConfigError("schedule needs r > 0, d >= 1, q > 0, M > 0");
    }
    const double mm = static_cast<double>(m);
    return Schedule{std::pow(mm, -1.0 / (2.0 * r + d)), M * M * std::pow(mm, lambda_exponent(r, d, q, variant)),
                    variant};
}

/// Minimax exponent -2r/(2r+d).
inline double reference_exponent(double r, int d) {
    if (!(r > 0.0) || d < 1) {
        throw ConfigError("reference_exponent needs r > 0 and d >= 1");
    }
    return -2.0 * r / (2.0 * r + d);
}

/// Even, 2-periodic fold of the real line onto [0, 1].
inline double mirror_fold(double t) {
    return std::abs(t - 2.0 * std::round(0.5 * t));
}

/// F(u) = f(fold(u_1), ..., fold(u_d)).
template <class F>
double mirror_extend_eval(F&& f, const Vector& u) {
    Vector folded(u.size());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        folded[k] = mirror_fold(u[k]);
    }
    return f(folded);
}

/// One-dimensional convenience overload.
template <class F>
double mirror_extend_eval(F&& f, double u) {
    return f(mirror_fold(u));
}

struct KernelTerm {
    double coefficient;
    double width_multiplier;
};

/// Number of Gaussian terms used for smoothness r: ceil(r).
inline int kernel_order(double r) {
    if (!(r > 0.0)) {
        throw ConfigError("smoothness r must be positive");
    }
    return static_cast<int>(std::ceil(r - 1e-12));
}

/// Terms (binom(r,j) (-1)^(1-j) j^(-d), j), j = 1..r, of
/// K(x) = sum_j binom(r,j) (-1)^(1-j) j^(-d) (2/(sigma^2 pi))^(d/2) G_{j sigma/sqrt2}(x).
inline std::vector<KernelTerm> conv_kernel_weights(int r, int d) {
    if (r < 1) {
        throw ConfigError("convolution kernel order r must be >= 1");
    }
    if (d < 1) {
        throw ConfigError("dimension d must be >= 1");
    }
    std::vector<KernelTerm> terms;
    terms.reserve(static_cast<std::size_t>(r));
    double binom = 1.0;
    for (int j = 1; j <= r; ++j) {
        binom = binom * static_cast<double>(r - j + 1) / static_cast<double>(j);
        const double sign = (j % 2 == 1) ? 1.0 : -1.0;
        terms.push_back({sign * binom * std::pow(static_cast<double>(j), -static_cast<double>(d)),
                         static_cast<double>(j)});
    }
    return terms;
}

/// K(x) for d = 1.
inline double conv_kernel_eval(double x, int r, double sigma) {
    const double norm = std::sqrt(2.0 / (sigma * sigma * std::numbers::pi));
    double k = 0.0;
    for (const auto& term : conv_kernel_weights(r, 1)) {
        const double w = term.width_multiplier * sigma / std::numbers::sqrt2;
        k += term.coefficient * norm * std::exp(-(x * x) / (w * w));
    }
    return k;
}

/// Half-width of the integration window for K: 8 r sigma / sqrt(2).
inline double conv_kernel_radius(int r, double sigma) {
    return 8.0 * static_cast<double>(r) * sigma / std::numbers::sqrt2;
}

namespace detail {

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n.
inline GaussRule gauss_legendre(int n) {
    GaussRule rule{std::vector<double>(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n))};
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        const auto lo = static_cast<std::size_t>(i);
        const auto hi = static_cast<std::size_t>(n - 1 - i);
        rule.nodes[lo] = -x;
        rule.nodes[hi] = x;
        rule.weights[lo] = rule.weights[hi] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

inline const GaussRule& gauss_legendre_16() {
    static const GaussRule rule = gauss_legendre(16);
    return rule;
}

} // namespace detail

struct QuadratureConfig {
    double rel_tol = 1e-8;
    int initial_panels = 4;
    int max_refinements = 12;
};

/// Composite 16-point Gauss-Legendre on [a, b] with forced breakpoints, doubling
/// panels until successive estimates agree to rel_tol relative to integral of |g|.
template <class G>
double composite_gauss(G&& g, double a, double b, std::vector<double> breaks, const QuadratureConfig& cfg) {
    const auto& rule = detail::gauss_legendre_16();
    breaks.push_back(a);
    breaks.push_back(b);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    auto integrate = [&](int panels, double& abs_mass) {
        double total = 0.0;
        abs_mass = 0.0;
        for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
            const double lo = breaks[s];
            const double hi = breaks[s + 1];
            if (!(hi > lo)) {
                continue;
            }
            const double h = (hi - lo) / panels;
            for (int p = 0; p < panels; ++p) {
                const double mid = lo + (p + 0.5) * h;
                for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
                    const double v = g(mid + 0.5 * h * rule.nodes[k]);
                    total += 0.5 * h * rule.weights[k] * v;
                    abs_mass += 0.5 * h * rule.weights[k] * std::abs(v);
                }
            }
        }
        return total;
    };

    double mass = 0.0;
    int panels = std::max(1, cfg.initial_panels);
    double previous = integrate(panels, mass);
    for (int level = 0; level < cfg.max_refinements; ++level) {
        panels *= 2;
        const double current = integrate(panels, mass);
        if (std::abs(current - previous) <= cfg.rel_tol * std::max(mass, std::numeric_limits<double>::min())) {
            return current;
        }
        previous = current;
    }
    throw NumericalError("quadrature did not reach the requested tolerance");
}

/// f0(x) = integral of K(x - u) F(u) du for a one-dimensional target f on [0, 1],
/// truncated to |u - x| <= 8 r sigma / sqrt(2). Breakpoints at the integers,
/// where the mirror extension may have kinks.
template <class F>
double f0_eval(F&& target, int r, double sigma, double x, const QuadratureConfig& quad = {}) {
    if (!(sigma > 0.0)) {
        throw ConfigError("f0_eval needs sigma > 0");
    }
    const auto terms = conv_kernel_weights(r, 1);
    const double norm = std::sqrt(2.0 / (sigma * sigma * std::numbers::pi));
    std::vector<double> inv_w2;
    for (const auto& t : terms) {
        const double w = t.width_multiplier * sigma / std::numbers::sqrt2;
        inv_w2.push_back(1.0 / (w * w));
    }
    auto K = [&](double s) {
        double k = 0.0;
        for (std::size_t j = 0; j < terms.size(); ++j) {
            k += terms[j].coefficient * std::exp(-(s * s) * inv_w2[j]);
        }
        return norm * k;
    };
    const double R = conv_kernel_radius(r, sigma);
    const double a = x - R;
    const double b = x + R;
    std::vector<double> breaks{x};
    for (double k = std::ceil(a); k <= b; k += 1.0) {
        breaks.push_back(k);
    }
    return composite_gauss([&](double u) { return K(x - u) * target(mirror_fold(u)); }, a, b, std::move(breaks),
                           quad);
}

/// Integral of K over its truncation window.
inline double conv_kernel_mass(int r, double sigma, const QuadratureConfig& quad = {}) {
    const double R = conv_kernel_radius(r, sigma);
    return composite_gauss([&](double s) { return conv_kernel_eval(s, r, sigma); }, -R, R, {0.0}, quad);
}

struct ModulusGrid {
    int x_points = 2048;
    int h_points = 256;
    double lo = 0.0;
    double hi = 1.0;
};

/// Grid estimate of sup_{0<h<=t} sup_x |Delta_h^r f(x)| with x, x + r h in [lo, hi].
/// Never exceeds the true modulus; converges to it as the grids refine.
template <class F>
double modulus_of_smoothness(F&& f, int r, double t, const ModulusGrid& grid = {}) {
    if (r < 1) {
        throw ConfigError("modulus order r must be >= 1");
    }
    if (!(t > 0.0)) {
        throw ConfigError("modulus step bound t must be positive");
    }
    std::vector<double> coeff(static_cast<std::size_t>(r) + 1);
    double binom = 1.0;
    for (int j = 0; j <= r; ++j) {
        coeff[static_cast<std::size_t>(j)] = ((r - j) % 2 == 0 ? 1.0 : -1.0) * binom;
        binom = binom * static_cast<double>(r - j) / static_cast<double>(j + 1);
    }
    double best = 0.0;
    for (int k = 1; k <= grid.h_points; ++k) {
        const double h = t * static_cast<double>(k) / static_cast<double>(grid.h_points);
        const double span = grid.hi - grid.lo - r * h;
        if (span < 0.0) {
            break;
        }
        for (int i = 0; i < grid.x_points; ++i) {
            const double x = grid.lo + (grid.x_points > 1 ? span * i / (grid.x_points - 1) : 0.0);
            double delta = 0.0;
            for (int j = 0; j <= r; ++j) {
                delta += coeff[static_cast<std::size_t>(j)] * f(x + j * h);
            }
            best = std::max(best, std::abs(delta));
        }
    }
    return best;
}

struct DecayReport {
    int r = 1;
    std::vector<double> sigmas;
    /// max over the grid of |f0 - f| per sigma.
    std::vector<double> sup_errors;
    /// e(sigma_{k+1}) / e(sigma_k).
    std::vector<double> ratios;
    /// (sigma_{k+1} / sigma_k)^r.
    std::vector<double> expected_ratios;
    double rel_tolerance = 0.25;
    bool within_tolerance = false;
};

/// Sup-grid error of f0 for a one-dimensional target at each sigma and the
/// successive error ratios against the sigma^r decay order.
template <class F>
DecayReport approximation_decay(F&& target, int r, const std::vector<double>& sigmas, int grid_points = 512,
                                double rel_tolerance = 0.25) {
    if (sigmas.size() < 2) {
        throw ConfigError("approximation_decay needs at least two sigma values");
    }
    if (grid_points < 2) {
        throw ConfigError("approximation_decay needs at least two grid points");
    }
    DecayReport rep;
    rep.r = r;
    rep.sigmas = sigmas;
    rep.rel_tolerance = rel_tolerance;
    for (double sigma : sigmas) {
        double err = 0.0;
        for (int i = 0; i < grid_points; ++i) {
            const double x = static_cast<double>(i) / (grid_points - 1);
            err = std::max(err, std::abs(f0_eval(target, r, sigma, x) - target(x)));
        }
        rep.sup_errors.push_back(err);
    }
    rep.within_tolerance = true;
    for (std::size_t k = 0; k + 1 < sigmas.size(); ++k) {
        const double ratio = rep.sup_errors[k + 1] / rep.sup_errors[k];
        const double expected = std::pow(sigmas[k + 1] / sigmas[k], r);
        rep.ratios.push_back(ratio);
        rep.expected_ratios.push_back(expected);
        if (!(std::abs(ratio / expected - 1.0) <= rel_tolerance)) {
            rep.within_tolerance = false;
        }
    }
    return rep;
}

/// Explicit hypothesis-error bound: m^(2-q/2) lambda M^q for q <= 2, lambda m M^q for q > 2.
inline double hypothesis_error_bound(long long m, double lambda, double q, double M) {
    if (m < 1 || !(lambda > 0.0) || !(q > 0.0) || !(M > 0.0)) {
        throw ConfigError("hypothesis_error_bound needs positive arguments");
    }
    const double mm = static_cast<double>(m);
    if (q <= 2.0) {
        return std::pow(mm, 2.0 - 0.5 * q) * lambda * std::pow(M, q);
    }
    return lambda * mm * std::pow(M, q);
}

/// Known one-dimensional target, needed for the approximation and sample terms.
struct TargetContext {
    std::function<double(double)> target;
    double r = 1.0;
    double noise_variance = 0.0;
    int quad_points = 512;
};

struct DecompositionReport {
    /// |f0 - f|^2 under uniform rho_X (the RKHS-norm part of D is not computed).
    std::optional<double> D_hat;
    /// [E_z(f0) - E(f0)] + [E(pi_M f) - E_z(pi_M f)].
    std::optional<double> S_hat;
    /// (E_z(pi_M f) + lambda sum|a_i|^q) - (E_z(f_z) + (1/m) b^T G b).
    double P_hat = 0.0;
    double P_bound = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool chain_holds = false;
    /// False for q < 1, where the solver gives no global-optimality guarantee.
    bool certified = false;
};

/// Checks E_z(pi_M f) + lambda sum|a_i|^q <= E_z(f_z) + (1/m) b^T G b + bound, where
/// f_z = sum b_i G(x_i, .) solves (I + G) b = y.
inline DecompositionReport decompose_check(const Dataset& data, const CoefficientModel& model, const PenaltySpec& spec,
                                           const std::optional<TargetContext>& target = std::nullopt) {
    data.validate(false);
    if (model.centers.cols() != data.X.cols() || model.coeffs.size() != static_cast<Eigen::Index>(data.size())) {
        throw InputError("decompose_check: model does not match the dataset");
    }
    const auto m = static_cast<Eigen::Index>(data.size());
    const double md = static_cast<double>(m);
    const Matrix G = gram_matrix(data.X, model.params);
    const Vector b = solve_rkhs_rls(G, data.y, 1.0 / md, m);
    const Vector fz = G * b;

    DecompositionReport rep;
    const double risk_clipped = empirical_risk(model, data, true);
    rep.lhs = risk_clipped + spec.lambda * penalty_value(model.coeffs, spec.q);
    const double rls_value = (data.y - fz).squaredNorm() / md + b.dot(fz) / md;
    rep.P_hat = rep.lhs - rls_value;
    rep.P_bound = hypothesis_error_bound(m, spec.lambda, spec.q, data.M);
    rep.rhs = rls_value + rep.P_bound;
    rep.chain_holds = rep.lhs <= rep.rhs;
    rep.certified = spec.q >= 1.0;

    if (target) {
        if (data.dim() != 1) {
            throw InputError("decompose_check: target terms are only available for d = 1");
        }
        const int order = kernel_order(target->r);
        const double sigma = model.params.sigma;
        auto f0 = [&](double x) { return f0_eval(target->target, order, sigma, x); };
        double d_sum = 0.0;
        double e_f0 = 0.0;
        double e_fit = 0.0;
        const int n = target->quad_points;
        Points grid(n, 1);
        for (int i = 0; i < n; ++i) {
            grid(i, 0) = (i + 0.5) / n;
        }
        const Vector fit = predict_all(model, grid);
        for (int i = 0; i < n; ++i) {
            const double x = grid(i, 0);
            const double fr = target->target(x);
            const double diff = f0(x) - fr;
            d_sum += diff * diff;
            const double dfit = clip(fit[i], data.M) - fr;
            e_fit += dfit * dfit;
        }
        e_f0 = d_sum / n + target->noise_variance;
        e_fit = e_fit / n + target->noise_variance;
        rep.D_hat = d_sum / n;
        double ez_f0 = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            const double r = data.y[i] - f0(data.X(i, 0));
            ez_f0 += r * r;
        }
        ez_f0 /= md;
        rep.S_hat = (ez_f0 - e_f0) + (e_fit - risk_clipped);
    }
    return rep;
}

} // namespace lqreg
