#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <gtest/gtest.h>

#include "lqreg/kernel.hpp"
#include "lqreg/penalty.hpp"
#include "lqreg/solvers.hpp"

using namespace lqreg;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Matrix scalar_matrix(double v) {
    Matrix G(1, 1);
    G << v;
    return G;
}

struct Instance {
    Matrix G;
    Vector y;
};

/// Gaussian Gram on random points in [0,1] with |y| <= 1.
Instance random_instance(std::mt19937_64& rng, int m, double sigma) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Points X(m, 1);
    Vector y(m);
    for (int i = 0; i < m; ++i) {
        X(i, 0) = u(rng);
        y[i] = std::cos(6.0 * X(i, 0)) * 0.7 + 0.3 * (2.0 * u(rng) - 1.0);
    }
    return {gram_matrix(X, KernelParams(sigma)), y};
}

SolverConfig tight(int max_iters = 200000, double tol = 1e-12) {
    SolverConfig cfg;
    cfg.max_iters = max_iters;
    cfg.tol = tol;
    return cfg;
}

bool non_increasing(const std::vector<double>& trace) {
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (trace[i] > trace[i - 1]) return false;
    }
    return true;
}

/// Coefficient-radius bound for a point whose objective is at most M^2.
double radius_bound(double q, double lambda, double M, int m) {
    const double base = std::pow(M * M / lambda, 1.0 / q);
    return q < 1.0 ? base : std::pow(static_cast<double>(m), 1.0 - 1.0 / q) * base;
}

void expect_fitted_model_bounds(const Instance& inst, const PenaltySpec& spec, const FitResult& fit, double M) {
    const int m = static_cast<int>(inst.y.size());
    const double F = objective(fit.coeffs, inst.G, inst.y, spec);
    const double F0 = inst.y.squaredNorm() / m;
    EXPECT_LE(F, F0 * (1.0 + 1e-12));
    EXPECT_LE(F0, M * M);
    const double l1 = fit.coeffs.lpNorm<1>();
    EXPECT_LE(l1, radius_bound(spec.q, spec.lambda, M, m) * (1.0 + 1e-12));
    EXPECT_LE(std::sqrt(std::max(0.0, fit.coeffs.dot(inst.G * fit.coeffs))), l1 * (1.0 + 1e-12) + 1e-300);
    EXPECT_TRUE(non_increasing(fit.objective_trace));
}

} // namespace

TEST(ClosedForm, Examples) {
    EXPECT_NEAR(solve_closed_form_q2(scalar_matrix(1.0), vec({2.0}), 1.0, 1)[0], 1.0, 1e-15);
    const Vector a = solve_closed_form_q2(Matrix::Identity(2, 2), vec({2.0, -2.0}), 1.0, 2);
    EXPECT_NEAR(a[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(a[1], -2.0 / 3.0, 1e-15);
}

TEST(ClosedForm, MatchesIndependentNormalEquationSolve) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 5; ++rep) {
        Matrix G(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) G(i, j) = u(rng);
        const Vector y = Vector::Random(3);
        const double lambda = 0.05;
        Matrix A = G.transpose() * G + 3.0 * lambda * Matrix::Identity(3, 3);
        const Vector oracle = A.colPivHouseholderQr().solve(G.transpose() * y);
        EXPECT_LE((solve_closed_form_q2(G, y, lambda, 3) - oracle).lpNorm<Eigen::Infinity>(), 1e-10);
    }
}

TEST(ClosedForm, SingularSystemReportsConditionEstimate) {
    Matrix G = Matrix::Ones(2, 2);
    try {
        solve_closed_form_q2(G, vec({1.0, 1.0}), 1e-300, 2);
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_LT(e.rcond(), 1e-12);
    }
}

TEST(RkhsRls, Examples) {
    EXPECT_DOUBLE_EQ(solve_rkhs_rls(scalar_matrix(1.0), vec({3.0}), 1.0, 1)[0], 1.5);
    const Vector b = solve_rkhs_rls(Matrix::Identity(2, 2), vec({1.0, -4.0}), 0.5, 2);
    EXPECT_DOUBLE_EQ(b[0], 0.5);
    EXPECT_DOUBLE_EQ(b[1], -2.0);
}

TEST(RkhsRls, ResidualIsTiny) {
    std::mt19937_64 rng(41);
    const auto inst = random_instance(rng, 4, 0.3);
    const double lambda = 0.01;
    const Vector b = solve_rkhs_rls(inst.G, inst.y, lambda, 4);
    const Matrix A = inst.G + 4.0 * lambda * Matrix::Identity(4, 4);
    EXPECT_LE((A * b - inst.y).norm(), 1e-10);
}

TEST(RkhsRls, DuplicatedCentersAreHandledByTheShift) {
    Points X(3, 1);
    X << 0.2, 0.2, 0.7;
    const Matrix G = gram_matrix(X, KernelParams(0.3));
    EXPECT_NO_THROW(solve_rkhs_rls(G, vec({0.1, 0.1, -0.4}), 1.0 / 3.0, 3));
    EXPECT_NO_THROW(solve_closed_form_q2(G, vec({0.1, 0.1, -0.4}), 1e-3, 3));
}

TEST(RkhsRls, DiffersFromCoefficientRidgeInGeneral) {
    std::mt19937_64 rng(43);
    const auto inst = random_instance(rng, 8, 0.2);
    const double lambda = 0.01;
    const Vector a = solve_closed_form_q2(inst.G, inst.y, lambda, 8);
    const Vector b = solve_rkhs_rls(inst.G, inst.y, lambda, 8);
    EXPECT_GT((a - b).norm(), 1e-6);
}

TEST(Lipschitz, Examples) {
    EXPECT_NEAR(lipschitz_estimate(Matrix::Identity(2, 2), 2), 1.0, 0.0101);
    EXPECT_NEAR(lipschitz_estimate(Matrix::Ones(2, 2), 2), 4.0, 0.0404);
}

TEST(Lipschitz, MatchesDenseEigensolve) {
    std::mt19937_64 rng(47);
    for (int rep = 0; rep < 5; ++rep) {
        const auto inst = random_instance(rng, 6, 0.1 + 0.1 * rep);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.G.transpose() * inst.G);
        const double exact = 2.0 / 6.0 * eig.eigenvalues().maxCoeff();
        const double L = lipschitz_estimate(inst.G, 6);
        EXPECT_GE(L, exact * (1.0 - 1e-12));
        EXPECT_LE(L, exact * 1.0101);
    }
}

TEST(Kkt, Examples) {
    const PenaltySpec l1(1.0, 1.0);
    EXPECT_NEAR(kkt_residual(vec({1.5}), scalar_matrix(1.0), vec({2.0}), l1), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(kkt_residual(vec({0.0}), scalar_matrix(1.0), vec({2.0}), l1), 3.0);
    EXPECT_THROW(kkt_residual(vec({0.0}), scalar_matrix(1.0), vec({2.0}), PenaltySpec(0.5, 1.0)), ConfigError);
}

TEST(Kkt, ClosedFormSolutionIsStationary) {
    std::mt19937_64 rng(53);
    const auto inst = random_instance(rng, 12, 0.25);
    const PenaltySpec spec(2.0, 0.01);
    const Vector a = solve_closed_form_q2(inst.G, inst.y, spec.lambda, 12);
    EXPECT_LE(kkt_residual(a, inst.G, inst.y, spec), 1e-8);
}

TEST(ProxGrad, ScalarL1Example) {
    const auto fit = solve_proximal_gradient(scalar_matrix(1.0), vec({2.0}), PenaltySpec(1.0, 1.0), tight());
    EXPECT_NEAR(fit.coeffs[0], 1.5, 1e-10);
    EXPECT_TRUE(fit.converged);
    ASSERT_TRUE(fit.kkt_residual.has_value());
    EXPECT_LE(*fit.kkt_residual, 1e-10);
    EXPECT_EQ(fit.optimality, Optimality::optimal);
}

TEST(ProxGrad, MatchesClosedFormForQ2) {
    std::mt19937_64 rng(59);
    std::uniform_int_distribution<int> um(5, 50);
    std::uniform_real_distribution<double> us(0.1, 0.5);
    for (int rep = 0; rep < 20; ++rep) {
        const int m = um(rng);
        const auto inst = random_instance(rng, m, us(rng));
        const double lambda = std::pow(10.0, -1.0 - 2.0 * (rep % 5) / 4.0);
        const PenaltySpec spec(2.0, lambda);
        const auto fit = solve_proximal_gradient(inst.G, inst.y, spec, tight());
        const Vector exact = solve_closed_form_q2(inst.G, inst.y, lambda, m);
        EXPECT_LE((fit.coeffs - exact).lpNorm<Eigen::Infinity>(), 1e-6) << "m=" << m << " lambda=" << lambda;
        EXPECT_TRUE(fit.converged);
        expect_fitted_model_bounds(inst, spec, fit, 1.0);
    }
}

TEST(ProxGrad, BacktrackingAndPlainIstaAgreeWithFista) {
    std::mt19937_64 rng(61);
    const auto inst = random_instance(rng, 15, 0.3);
    const PenaltySpec spec(1.0, 0.01);
    auto cfg = tight();
    const auto fista = solve_proximal_gradient(inst.G, inst.y, spec, cfg);
    cfg.step_rule = StepRule::backtracking;
    const auto bt = solve_proximal_gradient(inst.G, inst.y, spec, cfg);
    cfg.step_rule = StepRule::fixed_lipschitz;
    cfg.accelerate = false;
    const auto ista = solve_proximal_gradient(inst.G, inst.y, spec, cfg);
    const double F = objective(fista.coeffs, inst.G, inst.y, spec);
    EXPECT_NEAR(objective(bt.coeffs, inst.G, inst.y, spec), F, 1e-8);
    EXPECT_NEAR(objective(ista.coeffs, inst.G, inst.y, spec), F, 1e-6);
    EXPECT_TRUE(non_increasing(bt.objective_trace));
    EXPECT_TRUE(non_increasing(ista.objective_trace));
}

TEST(ProxGrad, NonconvexHalfPenaltyBeatsZeroAndWarmStart) {
    std::mt19937_64 rng(67);
    const auto inst = random_instance(rng, 25, 0.2);
    const PenaltySpec spec(0.5, 1e-3);
    const auto fit = solve_proximal_gradient(inst.G, inst.y, spec, tight(20000, 1e-10));
    const double F = objective(fit.coeffs, inst.G, inst.y, spec);
    const double F_zero = objective(Vector::Zero(25), inst.G, inst.y, spec);
    const double F_warm = objective(solve_closed_form_q2(inst.G, inst.y, spec.lambda, 25), inst.G, inst.y, spec);
    EXPECT_LE(F, F_zero);
    EXPECT_LE(F, F_warm);
    EXPECT_FALSE(fit.kkt_residual.has_value());
    EXPECT_NE(fit.optimality, Optimality::optimal);
    expect_fitted_model_bounds(inst, spec, fit, 1.0);
}

TEST(ProxGrad, WarmStartIsSupported) {
    std::mt19937_64 rng(71);
    const auto inst = random_instance(rng, 20, 0.25);
    const PenaltySpec spec(1.5, 1e-3);
    auto cfg = tight();
    cfg.init = InitRule::rls_warm_start;
    const auto warm = solve_proximal_gradient(inst.G, inst.y, spec, cfg);
    cfg.init = InitRule::zeros;
    const auto cold = solve_proximal_gradient(inst.G, inst.y, spec, cfg);
    EXPECT_NEAR(objective(warm.coeffs, inst.G, inst.y, spec), objective(cold.coeffs, inst.G, inst.y, spec), 1e-9);
    EXPECT_TRUE(non_increasing(warm.objective_trace));
}

TEST(ProxGrad, MaxItersWithoutConvergenceStillReturns) {
    std::mt19937_64 rng(73);
    const auto inst = random_instance(rng, 30, 0.3);
    const auto fit = solve_proximal_gradient(inst.G, inst.y, PenaltySpec(1.0, 1e-6), tight(3));
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.iterations, 3);
    EXPECT_EQ(fit.optimality, Optimality::not_converged);
    EXPECT_TRUE(fit.coeffs.allFinite());
}

TEST(ProxGrad, NonFiniteDataIsANumericalError) {
    const Vector y = vec({std::numeric_limits<double>::infinity()});
    EXPECT_THROW(solve_proximal_gradient(scalar_matrix(1.0), y, PenaltySpec(1.0, 1.0), tight()), NumericalError);
}

TEST(ProxGrad, FittedModelInvariantsAcrossExponents) {
    std::mt19937_64 rng(79);
    for (double q : {0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0}) {
        for (int rep = 0; rep < 3; ++rep) {
            const auto inst = random_instance(rng, 20 + 5 * rep, 0.15 + 0.1 * rep);
            const PenaltySpec spec(q, std::pow(10.0, -1.0 - rep));
            const auto fit = solve_proximal_gradient(inst.G, inst.y, spec, tight(5000, 1e-9));
            expect_fitted_model_bounds(inst, spec, fit, 1.0);
        }
    }
}

TEST(Irls, AgreesWithProxGradForL1) {
    std::mt19937_64 rng(83);
    const auto inst = random_instance(rng, 15, 0.3);
    const PenaltySpec spec(1.0, 0.005);
    const auto irls = solve_irls(inst.G, inst.y, spec, tight(5000, 1e-12));
    const auto pg = solve_proximal_gradient(inst.G, inst.y, spec, tight());
    EXPECT_NEAR(objective(irls.coeffs, inst.G, inst.y, spec), objective(pg.coeffs, inst.G, inst.y, spec), 1e-4);
    EXPECT_TRUE(non_increasing(irls.objective_trace));
}

TEST(Irls, ZeroDataGivesZeroCoefficients) {
    std::mt19937_64 rng(89);
    const auto inst = random_instance(rng, 10, 0.3);
    const auto fit = solve_irls(inst.G, Vector::Zero(10), PenaltySpec(0.5, 0.01), tight(200, 1e-10));
    EXPECT_EQ(fit.coeffs.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(Irls, HalfPenaltyImprovesOnZero) {
    std::mt19937_64 rng(97);
    const auto inst = random_instance(rng, 20, 0.2);
    const PenaltySpec spec(0.5, 1e-3);
    const auto fit = solve_irls(inst.G, inst.y, spec, tight(300, 1e-10));
    EXPECT_LE(objective(fit.coeffs, inst.G, inst.y, spec), objective(Vector::Zero(20), inst.G, inst.y, spec));
    EXPECT_TRUE(non_increasing(fit.objective_trace));
    expect_fitted_model_bounds(inst, spec, fit, 1.0);
}

TEST(Irls, RejectsConvexExponentsAboveOne) {
    EXPECT_THROW(solve_irls(scalar_matrix(1.0), vec({1.0}), PenaltySpec(1.5, 1.0), tight()), ConfigError);
}

TEST(Dispatch, ClosedFormRequiresQ2) {
    SolverConfig cfg;
    cfg.method = SolverMethod::closed_form_q2;
    EXPECT_THROW(fit_coefficients(scalar_matrix(1.0), vec({1.0}), PenaltySpec(1.0, 1.0), cfg), ConfigError);
    const auto fit = fit_coefficients(scalar_matrix(1.0), vec({2.0}), PenaltySpec(2.0, 1.0), cfg);
    EXPECT_NEAR(fit.coeffs[0], 1.0, 1e-15);
    EXPECT_EQ(fit.optimality, Optimality::optimal);
}

TEST(Dispatch, ConfigValidation) {
    SolverConfig cfg;
    cfg.max_iters = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.max_iters = 1;
    cfg.tol = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(parse_solver_method("cd"), ConfigError);
    EXPECT_EQ(parse_solver_method("irls"), SolverMethod::irls);
}
