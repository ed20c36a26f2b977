#pragma once

// Synthetic regression targets of known smoothness, bounded-noise samples
// and Monte Carlo estimates of |pi_M f - f_rho|^2 under uniform rho_X.
//
// Randomness comes from std::mt19937_64, whose output sequence is fixed by
// the standard; uniforms are built from the top 53 bits, so datasets are
// bit-identical across platforms for a given seed.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "error.hpp"
#include "kernel.hpp"

namespace lqreg {

enum class TargetFamily { cosine, kink, gauss_bump };

inline std::string_view to_string(TargetFamily f) {
    switch (f) {
    case TargetFamily::cosine: return "cosine";
    case TargetFamily::kink: return "kink";
    case TargetFamily::gauss_bump: return "gauss-bump";
    }
    return "?";
}

inline TargetFamily parse_target_family(std::string_view s) {
    if (s == "cosine") return TargetFamily::cosine;
    if (s == "kink") return TargetFamily::kink;
    if (s == "gauss-bump") return TargetFamily::gauss_bump;
    throw ConfigError("unknown target family '" + std::string(s) + "'");
}

/// cosine:     A prod_k cos(2 pi freq x_k)
/// kink:       A |x - c|^s      (Hoelder smoothness exactly s)
/// gauss-bump: A exp(-|x - c|^2 / width^2)
/// The center c is the same in every coordinate.
struct TargetSpec {
    TargetFamily family = TargetFamily::cosine;
    double amplitude = 1.0;
    double frequency = 1.0;
    double center = 0.5;
    double exponent = 1.5;
    double width = 0.1;
    int d = 1;
    double M = 1.0;
    /// Smoothness label; only feeds the schedules.
    double nominal_r = 2.0;
};

struct NoiseSpec {
    double halfwidth = 0.0;
};

/// Evaluable regression function on [0,1]^d with its exact sup norm.
class Target {
public:
    Target(std::function<double(const Vector&)> f, double sup_abs, int d)
        : f_(std::move(f)), sup_abs_(sup_abs), d_(d) {}

    double operator()(const Vector& x) const { return f_(x); }

    /// One-dimensional evaluation; requires d = 1.
    double at(double x) const {
        Vector p(1);
        p[0] = x;
        return f_(p);
    }

    double sup_abs() const noexcept { return sup_abs_; }
    int dim() const noexcept { return d_; }

private:
    std::function<double(const Vector&)> f_;
    double sup_abs_;
    int d_;
};

inline Target make_target(const TargetSpec& spec) {
    if (spec.d < 1) {
        throw ConfigError("target dimension must be >= 1");
    }
    if (!std::isfinite(spec.amplitude)) {
        throw ConfigError("target amplitude must be finite");
    }
    const double A = spec.amplitude;
    const double c = spec.center;
    const int d = spec.d;
    switch (spec.family) {
    case TargetFamily::cosine: {
        if (!(spec.frequency > 0.0)) {
            throw ConfigError("cosine frequency must be positive");
        }
        const double w = 2.0 * std::numbers::pi * spec.frequency;
        return Target(
            [A, w](const Vector& x) {
                double v = A;
                for (Eigen::Index k = 0; k < x.size(); ++k) {
                    v *= std::cos(w * x[k]);
                }
                return v;
            },
            std::abs(A), d);
    }
    case TargetFamily::kink: {
        if (!(spec.exponent > 0.0)) {
            throw ConfigError("kink exponent s must be positive");
        }
        if (!(c > 0.0 && c < 1.0)) {
            throw ConfigError("kink center must lie strictly inside (0, 1)");
        }
        const double s = spec.exponent;
        const double far = std::max(c, 1.0 - c);
        const double sup = std::abs(A) * std::pow(std::sqrt(static_cast<double>(d)) * far, s);
        return Target(
            [A, c, s](const Vector& x) {
                double r2 = 0.0;
                for (Eigen::Index k = 0; k < x.size(); ++k) {
                    r2 += (x[k] - c) * (x[k] - c);
                }
                return A * std::pow(std::sqrt(r2), s);
            },
            sup, d);
    }
    case TargetFamily::gauss_bump: {
        if (!(spec.width > 0.0)) {
            throw ConfigError("bump width must be positive");
        }
        const double inv_w2 = 1.0 / (spec.width * spec.width);
        return Target(
            [A, c, inv_w2](const Vector& x) {
                double r2 = 0.0;
                for (Eigen::Index k = 0; k < x.size(); ++k) {
                    r2 += (x[k] - c) * (x[k] - c);
                }
                return A * std::exp(-r2 * inv_w2);
            },
            std::abs(A), d);
    }
    }
    throw ConfigError("unknown target family");
}

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream tags for derive_seed.
enum class SeedStream : std::uint64_t { data = 1, test = 2 };

/// Per-trial seed from (master, m, q, trial, stream); independent of execution order.
inline std::uint64_t derive_seed(std::uint64_t master, long long m, double q, int trial, SeedStream stream) {
    std::uint64_t h = mix64(master);
    h = mix64(h ^ static_cast<std::uint64_t>(m));
    h = mix64(h ^ std::bit_cast<std::uint64_t>(q));
    h = mix64(h ^ static_cast<std::uint64_t>(trial));
    return mix64(h ^ static_cast<std::uint64_t>(stream));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Points uniform_points(std::mt19937_64& rng, Eigen::Index n, int d) {
    Points X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            X(i, k) = uniform01(rng);
        }
    }
    return X;
}

/// x_i ~ U[0,1]^d, y_i = f(x_i) + eta_i with eta_i ~ U[-h, h].
inline Dataset sample_dataset(const Target& target, long long m, const NoiseSpec& noise, double M, std::uint64_t seed) {
    if (m < 1) {
        throw ConfigError("sample_dataset needs m >= 1");
    }
    if (!(noise.halfwidth >= 0.0)) {
        throw ConfigError("noise halfwidth must be nonnegative");
    }
    if (!(M > 0.0)) {
        throw ConfigError("output bound M must be positive");
    }
    if (target.sup_abs() + noise.halfwidth > M) {
        throw ConfigError("sup|f| + noise halfwidth = " + std::to_string(target.sup_abs() + noise.halfwidth) +
                          " exceeds M = " + std::to_string(M));
    }
    std::mt19937_64 rng(seed);
    Dataset data;
    data.M = M;
    data.X = uniform_points(rng, m, target.dim());
    data.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double eta = noise.halfwidth * (2.0 * uniform01(rng) - 1.0);
        // Rounding can push f + eta one ulp past M.
        data.y[i] = std::clamp(target(data.X.row(i).transpose()) + eta, -M, M);
    }
    return data;
}

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo estimate of the integral of (pi_M f - f_rho)^2 d rho_X, rho_X uniform.
inline MonteCarloEstimate l2_rho_error(const CoefficientModel& model, const Target& target, double M, long long n_test,
                                       std::uint64_t seed) {
    if (n_test < 1) {
        throw ConfigError("l2_rho_error needs n_test >= 1");
    }
    if (static_cast<int>(model.dim()) != target.dim()) {
        throw InputError("l2_rho_error: model and target dimensions differ");
    }
    std::mt19937_64 rng(seed);
    const Points T = uniform_points(rng, n_test, target.dim());
    const Vector f = predict_all(model, T);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
        const double e = clip(f[i], M) - target(T.row(i).transpose());
        const double e2 = e * e;
        sum += e2;
        sum_sq += e2 * e2;
    }
    const double n = static_cast<double>(n_test);
    MonteCarloEstimate est;
    est.mean = sum / n;
    const double var = n > 1.0 ? std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0)) : 0.0;
    est.std_error = std::sqrt(var / n);
    return est;
}

} // namespace lqreg
