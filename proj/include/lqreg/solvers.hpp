#pragma once

// Minimizers of (1/m)|G a - y|^2 + lambda sum |a_i|^q over the coefficient
// vector a of a sample dependent hypothesis space model.
//
// All iterative solvers work with the normal-equation form H = G^T G,
// c = G^T y, so one matrix-vector product with H per iteration gives both
// the gradient (2/m)(H a - c) and the data term (a^T H a - 2 a^T c + y^T y)/m.
//
// Singular or duplicated-center Gram matrices need no special casing: the
// direct solvers always carry the +m lambda I shift.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "error.hpp"
#include "kernel.hpp"
#include "penalty.hpp"

namespace lqreg {

enum class SolverMethod { closed_form_q2, prox_grad, irls };
enum class StepRule { fixed_lipschitz, backtracking };
enum class InitRule { zeros, rls_warm_start };

inline std::string_view to_string(SolverMethod m) {
    switch (m) {
    case SolverMethod::closed_form_q2: return "closed-form-q2";
    case SolverMethod::prox_grad: return "prox-grad";
    case SolverMethod::irls: return "irls";
    }
    return "?";
}

inline std::string_view to_string(StepRule s) {
    return s == StepRule::fixed_lipschitz ? "fixed-lipschitz" : "backtracking";
}

inline std::string_view to_string(InitRule i) {
    return i == InitRule::zeros ? "zeros" : "rls-warm-start";
}

inline SolverMethod parse_solver_method(std::string_view s) {
    if (s == "closed-form-q2") return SolverMethod::closed_form_q2;
    if (s == "prox-grad") return SolverMethod::prox_grad;
    if (s == "irls") return SolverMethod::irls;
    throw ConfigError("unknown solver method '" + std::string(s) + "'");
}

inline StepRule parse_step_rule(std::string_view s) {
    if (s == "fixed-lipschitz") return StepRule::fixed_lipschitz;
    if (s == "backtracking") return StepRule::backtracking;
    throw ConfigError("unknown step rule '" + std::string(s) + "'");
}

inline InitRule parse_init_rule(std::string_view s) {
    if (s == "zeros") return InitRule::zeros;
    if (s == "rls-warm-start") return InitRule::rls_warm_start;
    throw ConfigError("unknown init rule '" + std::string(s) + "'");
}

struct SolverConfig {
    SolverMethod method = SolverMethod::prox_grad;
    int max_iters = 20000;
    double tol = 1e-8;
    StepRule step_rule = StepRule::fixed_lipschitz;
    InitRule init = InitRule::zeros;
    double irls_epsilon_floor = 1e-10;
    /// Monotone FISTA for q >= 1. Ignored for q < 1, which always runs monotone ISTA.
    bool accelerate = true;

    void validate() const {
        if (max_iters < 1) {
            throw ConfigError("solver max_iters must be >= 1");
        }
        if (!(tol > 0.0)) {
            throw ConfigError("solver tol must be positive");
        }
        if (!(irls_epsilon_floor > 0.0)) {
            throw ConfigError("irls_epsilon_floor must be positive");
        }
    }
};

/// "optimal" is only claimed for convex penalties (q >= 1) that met the stopping rule.
enum class Optimality { optimal, stationary, not_converged };

inline std::string_view to_string(Optimality o) {
    switch (o) {
    case Optimality::optimal: return "optimal";
    case Optimality::stationary: return "stationary";
    case Optimality::not_converged: return "not-converged";
    }
    return "?";
}

struct FitResult {
    Vector coeffs;
    /// Objective per accepted iterate, non-increasing. For an IRLS result this is
    /// the smoothed surrogate lambda sum (a_i^2 + eps)^(q/2) in place of the penalty.
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
    std::optional<double> kkt_residual;
    SolverMethod method = SolverMethod::prox_grad;
    Optimality optimality = Optimality::not_converged;
};

namespace detail {

inline Eigen::LLT<Matrix> factorize_spd(const Matrix& A, const char* what) {
    Eigen::LLT<Matrix> llt(A);
    const double rc = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (llt.info() != Eigen::Success || !(rc > std::numeric_limits<double>::epsilon())) {
        const double estimate = llt.info() == Eigen::Success ? rc : Eigen::LDLT<Matrix>(A).rcond();
        throw SolverError(std::string(what) + ": system is numerically singular", estimate);
    }
    return llt;
}

inline void check_system(const Matrix& gram, const Vector& y, double lambda) {
    if (gram.rows() != gram.cols() || gram.rows() != y.size() || y.size() == 0) {
        throw InputError("solver: Gram matrix and outputs have inconsistent sizes");
    }
    if (!(lambda > 0.0)) {
        throw ConfigError("solver: lambda must be positive");
    }
}

/// Least-squares data term in normal-equation form.
struct NormalForm {
    Matrix H;   // G^T G
    Vector c;   // G^T y
    double yy;  // y^T y
    double m;

    NormalForm(const Matrix& gram, const Vector& y)
        : H(gram.rows(), gram.cols()), c(gram.transpose() * y), yy(y.squaredNorm()),
          m(static_cast<double>(y.size())) {
        H.setZero();
        H.selfadjointView<Eigen::Lower>().rankUpdate(gram.transpose());
        H.triangularView<Eigen::StrictlyUpper>() = H.transpose();
    }

    /// (1/m)|G a - y|^2 given Ha = H a.
    double data_term(const Vector& a, const Vector& Ha) const {
        return std::max(0.0, (a.dot(Ha) - 2.0 * a.dot(c) + yy) / m);
    }

    /// data_term(z) - data_term(x) without the cancellation of the expanded form.
    double data_diff(const Vector& z, const Vector& Hz, const Vector& x, const Vector& Hx) const {
        const Vector d = z - x;
        return (d.dot(Hz + Hx) - 2.0 * d.dot(c)) / m;
    }

    Vector gradient(const Vector& Ha) const { return (2.0 / m) * (Ha - c); }
};

/// u^p - v^p for u, v >= 0 without cancellation when u is close to v.
inline double pow_diff(double u, double v, double p) {
    if (u == v) return 0.0;
    if (u == 0.0 || v == 0.0) return std::pow(u, p) - std::pow(v, p);
    return std::pow(v, p) * std::expm1(p * std::log1p((u - v) / v));
}

inline double penalty_diff(const Vector& z, const Vector& x, double q) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        s += pow_diff(std::abs(z[i]), std::abs(x[i]), q);
    }
    return s;
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power iteration.
template <class Apply>
double power_iteration(Apply apply, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v[i] = 1.0 + 0.01 * std::sin(static_cast<double>(i) + 1.0);
    }
    v.normalize();
    double estimate = 0.0;
    for (int it = 0; it < 1000; ++it) {
        Vector w = apply(v);
        const double rayleigh = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0) {
            return 0.0;
        }
        v = w / norm;
        if (it > 0 && std::abs(rayleigh - estimate) <= 1e-10 * std::abs(rayleigh)) {
            return std::max(rayleigh, norm);
        }
        estimate = rayleigh;
    }
    return estimate;
}

inline constexpr double lipschitz_safety = 1.01;

inline double lipschitz_from_normal(const NormalForm& nf) {
    const double top = power_iteration([&](const Vector& v) -> Vector { return nf.H * v; }, nf.H.rows());
    return lipschitz_safety * 2.0 * top / nf.m;
}

/// Distance from 0 to the subdifferential of the objective, given the data-term gradient.
inline double kkt_from_gradient(const Vector& a, const Vector& grad, const PenaltySpec& spec) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double r;
        if (spec.q == 1.0) {
            if (a[i] == 0.0) {
                r = std::max(std::abs(grad[i]) - spec.lambda, 0.0);
            } else {
                r = std::abs(grad[i] + spec.lambda * (a[i] > 0.0 ? 1.0 : -1.0));
            }
        } else {
            const double mag = std::abs(a[i]);
            const double sub = mag == 0.0 ? 0.0 : spec.q * std::pow(mag, spec.q - 1.0) * (a[i] > 0.0 ? 1.0 : -1.0);
            r = std::abs(grad[i] + spec.lambda * sub);
        }
        worst = std::max(worst, r);
    }
    return worst;
}

inline Vector prox_vector(const Vector& v, double tau, double q) {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out[i] = prox_scalar(v[i], tau, q);
    }
    return out;
}

inline void require_finite(double value, const char* where) {
    if (!std::isfinite(value)) {
        throw NumericalError(std::string(where) + ": objective became non-finite");
    }
}

/// Two-signal stopping rule: a run of small relative decreases plus, for
/// convex penalties, a KKT residual below tol (1 + |y|_inf).
class StopRule {
public:
    StopRule(double tol, double kkt_tol, bool convex) : tol_(tol), kkt_tol_(kkt_tol), convex_(convex) {}

    bool update(double previous, double current, double kkt) {
        const double rel = (previous - current) / std::max(std::abs(previous), std::numeric_limits<double>::min());
        quiet_ = rel < tol_ ? quiet_ + 1 : 0;
        return quiet_ >= window && (!convex_ || kkt < kkt_tol_);
    }

    static constexpr int window = 5;

private:
    double tol_;
    double kkt_tol_;
    bool convex_;
    int quiet_ = 0;
};

} // namespace detail

/// Unique minimizer of (1/m)|G a - y|^2 + lambda |a|^2: (G^T G + m lambda I) a = G^T y.
inline Vector solve_closed_form_q2(const Matrix& gram, const Vector& y, double lambda, Eigen::Index m) {
    detail::check_system(gram, y, lambda);
    Matrix A = gram.transpose() * gram;
    A.diagonal().array() += static_cast<double>(m) * lambda;
    return detail::factorize_spd(A, "closed-form q=2").solve(gram.transpose() * y);
}

/// Representer solution of the RKHS-regularized problem: (G + m lambda I) b = y.
/// With lambda = 1/m this is (I + G) b = y.
inline Vector solve_rkhs_rls(const Matrix& gram, const Vector& y, double lambda, Eigen::Index m) {
    detail::check_system(gram, y, lambda);
    Matrix A = gram;
    A.diagonal().array() += static_cast<double>(m) * lambda;
    return detail::factorize_spd(A, "RKHS RLS").solve(y);
}

/// Upper estimate (within 1%) of the gradient Lipschitz constant (2/m) sigma_max(G)^2.
inline double lipschitz_estimate(const Matrix& gram, Eigen::Index m) {
    if (gram.rows() != gram.cols()) {
        throw InputError("lipschitz_estimate: Gram matrix must be square");
    }
    const double top = detail::power_iteration(
        [&](const Vector& v) -> Vector { return gram.transpose() * (gram * v); }, gram.rows());
    return detail::lipschitz_safety * 2.0 * top / static_cast<double>(m);
}

/// First-order optimality residual for q >= 1.
inline double kkt_residual(const Vector& a, const Matrix& gram, const Vector& y, const PenaltySpec& spec) {
    if (spec.q < 1.0) {
        throw ConfigError("kkt_residual is only defined for convex penalties (q >= 1)");
    }
    if (gram.rows() != y.size() || a.size() != y.size()) {
        throw InputError("kkt_residual: dimension mismatch");
    }
    const Vector grad = (2.0 / static_cast<double>(y.size())) * (gram.transpose() * (gram * a - y));
    return detail::kkt_from_gradient(a, grad, spec);
}

namespace detail {

inline FitResult finish(FitResult res, const PenaltySpec& spec, const Vector& grad) {
    if (spec.q >= 1.0) {
        res.kkt_residual = kkt_from_gradient(res.coeffs, grad, spec);
    }
    if (!res.converged) {
        res.optimality = Optimality::not_converged;
    } else {
        res.optimality = spec.q >= 1.0 ? Optimality::optimal : Optimality::stationary;
    }
    return res;
}

inline FitResult proximal_gradient(const NormalForm& nf, const Vector& init, const Vector& y,
                                   const PenaltySpec& spec, const SolverConfig& cfg) {
    const bool convex = spec.q >= 1.0;
    const bool fista = convex && cfg.accelerate;
    const bool backtrack = cfg.step_rule == StepRule::backtracking;
    const double L_global = std::max(lipschitz_from_normal(nf), std::numeric_limits<double>::min());
    double L = backtrack ? L_global / 1024.0 : L_global;
    StopRule stop(cfg.tol, cfg.tol * (1.0 + y.lpNorm<Eigen::Infinity>()), convex);

    FitResult res;
    res.method = SolverMethod::prox_grad;

    Vector x = init;
    Vector Hx = nf.H * x;
    double Fx = nf.data_term(x, Hx) + spec.lambda * penalty_value(x, spec.q);
    require_finite(Fx, "prox-grad");
    res.objective_trace.push_back(Fx);

    // Extrapolated point for FISTA; equals x for ISTA.
    Vector yk = x;
    Vector Hy = Hx;
    double t = 1.0;

    Vector grad_x = nf.gradient(Hx);
    for (int k = 0; k < cfg.max_iters; ++k) {
        res.iterations = k + 1;
        const Vector grad_y = nf.gradient(Hy);

        Vector z;
        Vector Hz;
        double dF = 0.0;
        double step = 1.0 / L;
        bool accepted = false;
        for (int attempt = 0; attempt < 60; ++attempt) {
            z = prox_vector(yk - step * grad_y, spec.lambda * step, spec.q);
            Hz.noalias() = nf.H * z;
            if (backtrack) {
                const Vector dz = z - yk;
                const double rise = nf.data_diff(z, Hz, yk, Hy);
                const double model = grad_y.dot(dz) + 0.5 / step * dz.squaredNorm();
                if (rise > model + 1e-14 * (std::abs(model) + std::abs(rise))) {
                    L *= 2.0;
                    step = 1.0 / L;
                    continue;
                }
            }
            // Change in the objective relative to the current iterate, computed in
            // difference form so that it stays accurate next to the minimum.
            dF = nf.data_diff(z, Hz, x, Hx) + spec.lambda * penalty_diff(z, x, spec.q);
            require_finite(dF, "prox-grad");
            // Monotone safeguard. With momentum a rejected step falls back to x and restarts.
            if (dF <= 0.0 || fista) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted && !fista) {
            // No decrease at any step size: x is numerically stationary.
            res.converged = true;
            break;
        }

        const double F_prev = Fx;
        if (fista) {
            if (dF <= 0.0) {
                const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
                const double beta = (t - 1.0) / t_next;
                Vector y_next = z + beta * (z - x);
                Vector Hy_next = Hz + beta * (Hz - Hx);
                x = std::move(z);
                Hx = std::move(Hz);
                Fx += dF;
                yk = std::move(y_next);
                Hy = std::move(Hy_next);
                t = t_next;
            } else {
                yk = x;
                Hy = Hx;
                t = 1.0;
            }
        } else {
            x = std::move(z);
            Hx = std::move(Hz);
            Fx += dF;
            yk = x;
            Hy = Hx;
        }
        res.objective_trace.push_back(Fx);
        grad_x = nf.gradient(Hx);
        const double kkt = convex ? kkt_from_gradient(x, grad_x, spec) : 0.0;
        if (stop.update(F_prev, Fx, kkt)) {
            res.converged = true;
            break;
        }
    }
    res.coeffs = std::move(x);
    return finish(std::move(res), spec, grad_x);
}

inline Vector initial_point(const Matrix& gram, const Vector& y, const PenaltySpec& spec, const SolverConfig& cfg) {
    if (cfg.init == InitRule::rls_warm_start) {
        return solve_closed_form_q2(gram, y, spec.lambda, y.size());
    }
    return Vector::Zero(y.size());
}

} // namespace detail

/// Proximal gradient on the full objective: monotone FISTA for q >= 1, monotone ISTA for q < 1.
/// For q < 1 the result is a stationary point, not a certified global minimizer.
inline FitResult solve_proximal_gradient(const Matrix& gram, const Vector& y, const PenaltySpec& spec,
                                         const SolverConfig& cfg) {
    detail::check_system(gram, y, spec.lambda);
    cfg.validate();
    const detail::NormalForm nf(gram, y);
    return detail::proximal_gradient(nf, detail::initial_point(gram, y, spec, cfg), y, spec, cfg);
}

/// Iteratively reweighted least squares for 0 < q <= 1.
///
/// Each outer step minimizes the quadratic majorizer of
///   J_eps(a) = (1/m)|G a - y|^2 + lambda sum (a_i^2 + eps)^(q/2)
/// and then shrinks eps by 10x down to cfg.irls_epsilon_floor, so J_eps(a_k)
/// never increases. The returned point is the better (by the true objective)
/// of the IRLS iterate and a zeros-initialized proximal gradient run.
inline FitResult solve_irls(const Matrix& gram, const Vector& y, const PenaltySpec& spec, const SolverConfig& cfg) {
    detail::check_system(gram, y, spec.lambda);
    cfg.validate();
    if (spec.q > 1.0) {
        throw ConfigError("IRLS supports 0 < q <= 1; use prox-grad for q > 1");
    }
    const detail::NormalForm nf(gram, y);
    const double q = spec.q;
    const double mlam = nf.m * spec.lambda;

    auto surrogate = [&](const Vector& a, const Vector& Ha, double eps) {
        double pen = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            pen += std::pow(a[i] * a[i] + eps, 0.5 * q);
        }
        return nf.data_term(a, Ha) + spec.lambda * pen;
    };

    FitResult irls;
    irls.method = SolverMethod::irls;
    Vector a = solve_closed_form_q2(gram, y, spec.lambda, y.size());
    Vector Ha = nf.H * a;
    double eps = std::max(1.0, a.lpNorm<Eigen::Infinity>() * a.lpNorm<Eigen::Infinity>());
    double J = surrogate(a, Ha, eps);
    detail::require_finite(J, "irls");
    irls.objective_trace.push_back(J);

    for (int k = 0; k < cfg.max_iters; ++k) {
        irls.iterations = k + 1;
        Matrix A = nf.H;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            A(i, i) += mlam * q * std::pow(a[i] * a[i] + eps, 0.5 * q - 1.0);
        }
        Vector a_next = detail::factorize_spd(A, "IRLS inner solve").solve(nf.c);
        Vector Ha_next = nf.H * a_next;
        double pen_change = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            // (a_next^2 + eps) - (a^2 + eps) formed as a product to keep the small difference exact
            const double base = a[i] * a[i] + eps;
            pen_change += std::pow(base, 0.5 * q) *
                          std::expm1(0.5 * q * std::log1p((a_next[i] - a[i]) * (a_next[i] + a[i]) / base));
        }
        const double dJ = nf.data_diff(a_next, Ha_next, a, Ha) + spec.lambda * pen_change;
        detail::require_finite(dJ, "irls");
        if (dJ > 0.0) {
            // Majorization guarantees descent; only rounding can land here.
            irls.converged = eps <= cfg.irls_epsilon_floor;
            break;
        }
        const double step = (a_next - a).lpNorm<Eigen::Infinity>();
        const double rel = -dJ / std::max(std::abs(J), std::numeric_limits<double>::min());
        a = std::move(a_next);
        Ha = std::move(Ha_next);
        J += dJ;
        irls.objective_trace.push_back(J);
        if (eps <= cfg.irls_epsilon_floor && rel < cfg.tol && step <= cfg.tol * (1.0 + a.lpNorm<Eigen::Infinity>())) {
            irls.converged = true;
            break;
        }
        const double eps_next = std::max(eps / 10.0, cfg.irls_epsilon_floor);
        if (eps_next < eps) {
            double shrink = 0.0;
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                shrink += detail::pow_diff(a[i] * a[i] + eps_next, a[i] * a[i] + eps, 0.5 * q);
            }
            J += spec.lambda * shrink;
            eps = eps_next;
        }
    }
    irls.coeffs = a;
    irls = detail::finish(std::move(irls), spec, nf.gradient(Ha));

    SolverConfig pg_cfg = cfg;
    pg_cfg.method = SolverMethod::prox_grad;
    pg_cfg.init = InitRule::zeros;
    FitResult pg = detail::proximal_gradient(nf, Vector::Zero(y.size()), y, spec, pg_cfg);

    const double F_irls = objective(irls.coeffs, gram, y, spec);
    const double F_pg = objective(pg.coeffs, gram, y, spec);
    return F_irls <= F_pg ? irls : pg;
}

/// Dispatch on cfg.method. The closed form requires q = 2.
inline FitResult fit_coefficients(const Matrix& gram, const Vector& y, const PenaltySpec& spec,
                                  const SolverConfig& cfg) {
    switch (cfg.method) {
    case SolverMethod::closed_form_q2: {
        if (spec.q != 2.0) {
            throw ConfigError("closed-form-q2 solver requires q = 2");
        }
        FitResult res;
        res.method = SolverMethod::closed_form_q2;
        res.coeffs = solve_closed_form_q2(gram, y, spec.lambda, y.size());
        res.objective_trace.push_back(objective(res.coeffs, gram, y, spec));
        res.iterations = 1;
        res.converged = true;
        res.kkt_residual = kkt_residual(res.coeffs, gram, y, spec);
        res.optimality = Optimality::optimal;
        return res;
    }
    case SolverMethod::prox_grad:
        return solve_proximal_gradient(gram, y, spec, cfg);
    case SolverMethod::irls:
        return solve_irls(gram, y, spec, cfg);
    }
    throw ConfigError("unknown solver method");
}

} // namespace lqreg
