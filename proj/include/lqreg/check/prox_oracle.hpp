#pragma once

// Brute-force oracle for the scalar proximal map and the randomized suite
// behind `ratelab prox-check`. The oracle never calls prox_scalar: it scans
// h(a) = 1/2 (a - v)^2 + tau |a|^q on a uniform grid over [-|v|, |v|] and
// refines the best grid cell by golden-section search.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../penalty.hpp"
#include "../synth.hpp"

namespace lqreg::check {

struct GridMinimum {
    double argmin;
    double value;
};

inline double prox_h(double a, double v, double tau, double q) {
    const double d = a - v;
    return 0.5 * d * d + tau * (a == 0.0 ? 0.0 : std::pow(std::abs(a), q));
}

inline GridMinimum prox_grid_minimum(double v, double tau, double q, double step = 1e-4) {
    const double w = std::abs(v);
    GridMinimum best{0.0, prox_h(0.0, v, tau, q)};
    const auto n = static_cast<long long>(std::ceil(w / step));
    for (long long k = -n; k <= n; ++k) {
        const double a = std::clamp(static_cast<double>(k) * step, -w, w);
        const double h = prox_h(a, v, tau, q);
        if (h < best.value) {
            best = {a, h};
        }
    }
    // Golden-section refinement inside the neighbouring grid cells.
    double lo = std::max(best.argmin - step, -w);
    double hi = std::min(best.argmin + step, w);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double h1 = prox_h(x1, v, tau, q);
    double h2 = prox_h(x2, v, tau, q);
    for (int it = 0; it < 80 && hi - lo > 1e-15; ++it) {
        if (h1 <= h2) {
            hi = x2;
            x2 = x1;
            h2 = h1;
            x1 = hi - inv_phi * (hi - lo);
            h1 = prox_h(x1, v, tau, q);
        } else {
            lo = x1;
            x1 = x2;
            h1 = h2;
            x2 = lo + inv_phi * (hi - lo);
            h2 = prox_h(x2, v, tau, q);
        }
    }
    if (h1 < best.value) best = {x1, h1};
    if (h2 < best.value) best = {x2, h2};
    return best;
}

inline constexpr std::array<double, 8> suite_exponents{0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0};
inline constexpr double suite_objective_slack = 1e-6;

struct ProxSuiteResult {
    int cases = 0;
    int optimality_failures = 0;
    int oddness_failures = 0;
    int shrinkage_failures = 0;
    double worst_excess = -1e300;
    nlohmann::json failures = nlohmann::json::array();

    bool passed() const { return optimality_failures == 0 && oddness_failures == 0 && shrinkage_failures == 0; }

    nlohmann::json to_json() const {
        return {{"cases", cases},
                {"optimality_failures", optimality_failures},
                {"oddness_failures", oddness_failures},
                {"shrinkage_failures", shrinkage_failures},
                {"worst_objective_excess", worst_excess},
                {"objective_slack", suite_objective_slack},
                {"passed", passed()},
                {"failures", failures}};
    }
};

/// Random triples v in [-5, 5], tau in (0, 2], q from suite_exponents.
inline ProxSuiteResult run_prox_suite(int cases, std::uint64_t seed) {
    std::mt19937_64 rng(mix64(seed));
    ProxSuiteResult res;
    for (int c = 0; c < cases; ++c) {
        const double v = 10.0 * uniform01(rng) - 5.0;
        const double tau = 2.0 * (1.0 - uniform01(rng));
        const double q = suite_exponents[static_cast<std::size_t>(rng() % suite_exponents.size())];
        const double p = prox_scalar(v, tau, q);
        const double p_neg = prox_scalar(-v, tau, q);
        const GridMinimum grid = prox_grid_minimum(v, tau, q);
        const double excess = prox_h(p, v, tau, q) - grid.value;
        res.worst_excess = std::max(res.worst_excess, excess);
        ++res.cases;
        nlohmann::json info{{"v", v}, {"tau", tau}, {"q", q}, {"prox", p}, {"grid_argmin", grid.argmin}};
        if (excess > suite_objective_slack) {
            ++res.optimality_failures;
            info["kind"] = "optimality";
            res.failures.push_back(info);
        }
        if (p_neg != -p) {
            ++res.oddness_failures;
            info["kind"] = "oddness";
            res.failures.push_back(info);
        }
        if (std::abs(p) > std::abs(v)) {
            ++res.shrinkage_failures;
            info["kind"] = "shrinkage";
            res.failures.push_back(info);
        }
    }
    return res;
}

} // namespace lqreg::check
