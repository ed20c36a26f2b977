#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "lqreg/kernel.hpp"
#include "lqreg/solvers.hpp"
#include "lqreg/theory.hpp"

using namespace lqreg;

namespace {

constexpr double pi = std::numbers::pi;

double cos2pi(double x) { return std::cos(2.0 * pi * x); }

/// f0 for cos(2 pi x): each normalized Gaussian term damps the cosine by exp(-pi^2 j^2 sigma^2 / 2).
double f0_cos_analytic(int r, double sigma, double x) {
    double damp = 0.0;
    for (const auto& t : conv_kernel_weights(r, 1)) {
        const double j = t.width_multiplier;
        damp += t.coefficient * j * std::exp(-pi * pi * j * j * sigma * sigma / 2.0);
    }
    return damp * cos2pi(x);
}

struct Problem {
    Dataset data;
    Matrix G;
    KernelParams kp;
};

Problem random_problem(std::mt19937_64& rng, int m) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> us(0.1, 0.4);
    Points X(m, 1);
    Vector y(m);
    for (int i = 0; i < m; ++i) {
        X(i, 0) = u(rng);
        y[i] = 0.5 * cos2pi(X(i, 0)) + 0.5 * (2.0 * u(rng) - 1.0);
    }
    const KernelParams kp(us(rng));
    return {Dataset{X, y, 1.0}, gram_matrix(X, kp), kp};
}

} // namespace

TEST(Schedule, Examples) {
    const auto th = schedule(1000, 1.0, 1, 2.0, 1.0, ScheduleVariant::theorem_statement);
    EXPECT_NEAR(th.sigma, 0.1, 1e-14);
    EXPECT_NEAR(th.lambda, 1e-6, 1e-19);
    const auto pr = schedule(1000, 1.0, 1, 2.0, 1.0, ScheduleVariant::proof_section);
    EXPECT_NEAR(pr.sigma, 0.1, 1e-14);
    EXPECT_NEAR(pr.lambda, 1e-5, 1e-18);
    EXPECT_EQ(pr.variant, ScheduleVariant::proof_section);
}

TEST(Schedule, ExponentBranches) {
    EXPECT_DOUBLE_EQ(lambda_exponent(1.0, 1, 2.0, ScheduleVariant::theorem_statement), -2.0);
    EXPECT_DOUBLE_EQ(lambda_exponent(1.0, 1, 3.0, ScheduleVariant::theorem_statement), -2.0);
    EXPECT_NEAR(lambda_exponent(1.0, 1, 2.0, ScheduleVariant::proof_section), -5.0 / 3.0, 1e-15);
    EXPECT_NEAR(lambda_exponent(1.0, 1, 3.0, ScheduleVariant::proof_section), -5.0 / 3.0, 1e-15);
    EXPECT_NEAR(lambda_exponent(2.0, 1, 1.0, ScheduleVariant::theorem_statement), (-24.0 - 6.0 + 4.0 + 1.0) / 10.0,
                1e-15);
    EXPECT_NEAR(lambda_exponent(2.0, 1, 0.5, ScheduleVariant::proof_section), (-24.0 - 4.0 + 2.0 + 0.5) / 10.0,
                1e-15);
    // The q <= 2 branches meet the q > 2 branches at q = 2.
    for (auto v : {ScheduleVariant::theorem_statement, ScheduleVariant::proof_section}) {
        for (double r : {0.5, 1.0, 2.0, 3.5}) {
            for (int d : {1, 2, 5}) {
                EXPECT_NEAR(lambda_exponent(r, d, 2.0, v), lambda_exponent(r, d, 2.0 + 1e-12, v), 1e-9);
            }
        }
    }
}

TEST(Schedule, Validation) {
    EXPECT_THROW(schedule(0, 1.0, 1, 1.0, 1.0, ScheduleVariant::proof_section), ConfigError);
    EXPECT_THROW(schedule(10, 0.0, 1, 1.0, 1.0, ScheduleVariant::proof_section), ConfigError);
    EXPECT_THROW(parse_schedule_variant("final"), ConfigError);
    EXPECT_EQ(parse_schedule_variant("theorem"), ScheduleVariant::theorem_statement);
    EXPECT_EQ(parse_schedule_variant("proof-section"), ScheduleVariant::proof_section);
}

TEST(ReferenceExponent, Examples) {
    EXPECT_NEAR(reference_exponent(1.0, 1), -2.0 / 3.0, 1e-15);
    EXPECT_NEAR(reference_exponent(2.0, 1), -0.8, 1e-15);
    double prev = 0.0;
    for (double r = 0.5; r < 1e4; r *= 2.0) {
        const double e = reference_exponent(r, 3);
        EXPECT_LT(e, prev);
        EXPECT_GT(e, -1.0);
        prev = e;
    }
    EXPECT_NEAR(reference_exponent(1e9, 1), -1.0, 1e-8);
}

TEST(MirrorExtension, Examples) {
    auto f = [](double x) { return x * x + 0.1; };
    EXPECT_DOUBLE_EQ(mirror_extend_eval(f, 0.3), f(0.3));
    EXPECT_DOUBLE_EQ(mirror_extend_eval(f, -0.3), f(0.3));
    EXPECT_NEAR(mirror_extend_eval(f, 1.7), f(0.3), 1e-15);
    EXPECT_EQ(mirror_fold(1.0), 1.0);
    EXPECT_EQ(mirror_fold(0.0), 0.0);
    EXPECT_NEAR(mirror_fold(2.5), 0.5, 1e-15);
}

TEST(MirrorExtension, EvenPeriodicAgreesOnDomain) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int i = 0; i < 1000; ++i) {
        const double t = u(rng);
        const double f = mirror_fold(t);
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0);
        EXPECT_NEAR(mirror_fold(-t), f, 1e-14);
        EXPECT_NEAR(mirror_fold(t + 2.0), f, 1e-14);
    }
    Vector u2(2);
    u2 << -0.25, 1.5;
    const double v = mirror_extend_eval([](const Vector& x) { return 10.0 * x[0] + x[1]; }, u2);
    EXPECT_NEAR(v, 2.5 + 0.5, 1e-14);
}

TEST(ConvKernel, WeightExamples) {
    const auto w1 = conv_kernel_weights(1, 1);
    ASSERT_EQ(w1.size(), 1u);
    EXPECT_EQ(w1[0].coefficient, 1.0);
    EXPECT_EQ(w1[0].width_multiplier, 1.0);

    const auto w2 = conv_kernel_weights(2, 1);
    ASSERT_EQ(w2.size(), 2u);
    EXPECT_EQ(w2[0].coefficient, 2.0);
    EXPECT_EQ(w2[1].coefficient, -0.5);
    EXPECT_EQ(w2[1].width_multiplier, 2.0);

    const auto w3 = conv_kernel_weights(3, 1);
    ASSERT_EQ(w3.size(), 3u);
    EXPECT_DOUBLE_EQ(w3[0].coefficient, 3.0);
    EXPECT_DOUBLE_EQ(w3[1].coefficient, -1.5);
    EXPECT_DOUBLE_EQ(w3[2].coefficient, 1.0 / 3.0);
}

TEST(ConvKernel, AlternatingBinomialSumIsOne) {
    for (int d : {1, 2, 3}) {
        for (int r = 1; r <= 8; ++r) {
            double s = 0.0;
            for (const auto& t : conv_kernel_weights(r, d)) {
                s += t.coefficient * std::pow(t.width_multiplier, d);
            }
            EXPECT_NEAR(s, 1.0, 1e-12) << "r=" << r << " d=" << d;
        }
    }
    EXPECT_THROW(conv_kernel_weights(0, 1), ConfigError);
    EXPECT_EQ(kernel_order(1.5), 2);
    EXPECT_EQ(kernel_order(2.0), 2);
}

TEST(ConvKernel, MassIsOne) {
    for (int r = 1; r <= 4; ++r) {
        for (double sigma : {0.05, 0.1, 0.2}) {
            EXPECT_NEAR(conv_kernel_mass(r, sigma), 1.0, 1e-6) << "r=" << r << " sigma=" << sigma;
        }
    }
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
    const auto& rule = detail::gauss_legendre_16();
    double w = 0.0;
    double x30 = 0.0;
    double x31 = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        w += rule.weights[i];
        x30 += rule.weights[i] * std::pow(rule.nodes[i], 30);
        x31 += rule.weights[i] * std::pow(rule.nodes[i], 31);
    }
    EXPECT_NEAR(w, 2.0, 1e-14);
    EXPECT_NEAR(x30, 2.0 / 31.0, 1e-14);
    EXPECT_NEAR(x31, 0.0, 1e-15);
}

TEST(F0, ConstantTargetIsReproduced) {
    for (int r : {1, 2, 3}) {
        for (double x : {0.0, 0.37, 1.0}) {
            EXPECT_NEAR(f0_eval([](double) { return 1.0; }, r, 0.1, x), 1.0, 1e-6);
        }
    }
}

TEST(F0, CosineExamples) {
    EXPECT_NEAR(f0_eval(cos2pi, 1, 0.1, 0.25), 0.0, 1e-6);
    const double v = f0_eval(cos2pi, 1, 0.1, 0.0);
    EXPECT_NEAR(v, std::exp(-pi * pi * 0.01 / 2.0), 1e-7);
    EXPECT_NEAR(v, 0.951853, 1e-5);
}

TEST(F0, CosineMatchesAnalyticConvolution) {
    for (int r : {1, 2, 3}) {
        for (double sigma : {0.05, 0.1, 0.2}) {
            for (double x : {0.0, 0.1, 0.45, 0.8, 1.0}) {
                EXPECT_NEAR(f0_eval(cos2pi, r, sigma, x), f0_cos_analytic(r, sigma, x), 1e-7)
                    << "r=" << r << " sigma=" << sigma << " x=" << x;
            }
        }
    }
}

TEST(F0, SecondOrderErrorForCosineIsQuadraticInSigma) {
    // With a = pi^2 sigma^2 / 2 the r = 2 error is 1 - 2 e^-a + e^-4a = -2a + 7a^2 + O(a^3).
    for (double sigma : {0.02, 0.01}) {
        const double a = pi * pi * sigma * sigma / 2.0;
        EXPECT_NEAR(f0_eval(cos2pi, 2, sigma, 0.0) - 1.0, 2.0 * a - 7.0 * a * a, 30.0 * a * a * a);
    }
}

TEST(Quadrature, NonConvergenceIsANumericalError) {
    QuadratureConfig cfg;
    cfg.max_refinements = 1;
    cfg.rel_tol = 1e-300;
    EXPECT_THROW(composite_gauss([](double x) { return std::sin(1.0 / (x + 1e-9)); }, 0.0, 1.0, {}, cfg),
                 NumericalError);
}

TEST(Modulus, Examples) {
    EXPECT_NEAR(modulus_of_smoothness([](double x) { return x; }, 1, 0.1), 0.1, 1e-12);
    EXPECT_NEAR(modulus_of_smoothness([](double x) { return 3.0 * x - 1.0; }, 2, 0.2), 0.0, 1e-12);
    EXPECT_NEAR(modulus_of_smoothness(cos2pi, 1, 0.05), 2.0 * std::sin(0.05 * pi), 1e-6);
    EXPECT_NEAR(2.0 * std::sin(0.05 * pi), 0.31287, 1e-5);
}

TEST(Modulus, MonotoneInTAndBoundedByTwoToTheR) {
    auto f = [](double x) { return std::pow(std::abs(x - 0.5), 0.7); };
    ModulusGrid grid{512, 64, 0.0, 1.0};
    for (int r : {1, 2, 3}) {
        double prev = 0.0;
        for (double t : {0.01, 0.02, 0.05, 0.1, 0.2}) {
            const double w = modulus_of_smoothness(f, r, t, grid);
            EXPECT_GE(w, prev - 1e-15);
            EXPECT_LE(w, std::pow(2.0, r) * std::pow(0.5, 0.7) + 1e-12);
            prev = w;
        }
    }
}

TEST(Modulus, HoelderKinkScalesLikeTPowerS) {
    auto f = [](double x) { return std::pow(std::abs(x - 0.5), 0.5); };
    const double w1 = modulus_of_smoothness(f, 1, 0.01);
    const double w2 = modulus_of_smoothness(f, 1, 0.04);
    EXPECT_NEAR(w2 / w1, 2.0, 0.15);
}

TEST(HypothesisBound, Examples) {
    EXPECT_NEAR(hypothesis_error_bound(100, 1e-3, 1.0, 1.0), 1.0, 1e-12);
    EXPECT_NEAR(hypothesis_error_bound(100, 1e-3, 2.0, 1.0), 0.1, 1e-14);
    EXPECT_NEAR(hypothesis_error_bound(100, 1e-3, 3.0, 1.0), 0.1, 1e-14);
    EXPECT_NEAR(hypothesis_error_bound(100, 1e-3, 3.0, 2.0), 0.8, 1e-14);
    EXPECT_THROW(hypothesis_error_bound(0, 1e-3, 1.0, 1.0), ConfigError);
}

TEST(Decompose, ChainHoldsForClosedFormQ2) {
    std::mt19937_64 rng(101);
    for (int rep = 0; rep < 20; ++rep) {
        const auto p = random_problem(rng, 10 + 2 * rep);
        const PenaltySpec spec(2.0, std::pow(10.0, -1.0 - (rep % 4)));
        const Vector a = solve_closed_form_q2(p.G, p.data.y, spec.lambda, p.data.size());
        const auto rep_ = decompose_check(p.data, CoefficientModel(p.kp, p.data.X, a), spec);
        EXPECT_TRUE(rep_.chain_holds) << "lhs=" << rep_.lhs << " rhs=" << rep_.rhs;
        EXPECT_TRUE(rep_.certified);
        EXPECT_FALSE(rep_.D_hat.has_value());
        EXPECT_NEAR(rep_.lhs - rep_.P_hat, rep_.rhs - rep_.P_bound, 1e-12);
    }
}

TEST(Decompose, ChainHoldsForL1ProxGrad) {
    std::mt19937_64 rng(103);
    SolverConfig cfg;
    cfg.tol = 1e-10;
    cfg.max_iters = 100000;
    for (int rep = 0; rep < 10; ++rep) {
        const auto p = random_problem(rng, 15 + rep);
        const PenaltySpec spec(1.0, std::pow(10.0, -2.0 - (rep % 3)));
        const auto fit = solve_proximal_gradient(p.G, p.data.y, spec, cfg);
        const auto r = decompose_check(p.data, CoefficientModel(p.kp, p.data.X, fit.coeffs), spec);
        EXPECT_TRUE(r.chain_holds) << "lhs=" << r.lhs << " rhs=" << r.rhs;
    }
}

TEST(Decompose, ZeroDataIsTrivial) {
    std::mt19937_64 rng(107);
    auto p = random_problem(rng, 8);
    p.data.y.setZero();
    const PenaltySpec spec(0.5, 0.1);
    const auto r = decompose_check(p.data, CoefficientModel(p.kp, p.data.X, Vector::Zero(8)), spec);
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_TRUE(r.chain_holds);
    EXPECT_FALSE(r.certified);
}

TEST(Decompose, TargetTermsAreReportedInOneDimension) {
    std::mt19937_64 rng(109);
    const auto p = random_problem(rng, 30);
    const PenaltySpec spec(2.0, 1e-3);
    const Vector a = solve_closed_form_q2(p.G, p.data.y, spec.lambda, 30);
    TargetContext ctx{[](double x) { return 0.5 * cos2pi(x); }, 2.0, 1.0 / 12.0, 256};
    const auto r = decompose_check(p.data, CoefficientModel(p.kp, p.data.X, a), spec, ctx);
    ASSERT_TRUE(r.D_hat.has_value());
    ASSERT_TRUE(r.S_hat.has_value());
    EXPECT_GE(*r.D_hat, 0.0);
    // D for the cosine is the squared damping defect times the mean of cos^2 (= 1/2).
    const double defect = f0_cos_analytic(2, p.kp.sigma, 0.0) - 1.0;
    EXPECT_NEAR(*r.D_hat, 0.25 * defect * defect * 0.5, 1e-6);
    EXPECT_TRUE(std::isfinite(*r.S_hat));
}

TEST(Decompose, MismatchedModelRejected) {
    std::mt19937_64 rng(113);
    const auto p = random_problem(rng, 6);
    EXPECT_THROW(decompose_check(p.data, CoefficientModel(p.kp, p.data.X.topRows(5), Vector::Zero(5)),
                                 PenaltySpec(1.0, 1.0)),
                 InputError);
}

TEST(ApproximationDecay, CosineErrorsMatchAnalyticDamping) {
    const std::vector<double> sigmas{0.2, 0.1, 0.05};
    for (int r : {1, 2}) {
        const auto rep = approximation_decay(cos2pi, r, sigmas);
        ASSERT_EQ(rep.sup_errors.size(), 3u);
        ASSERT_EQ(rep.ratios.size(), 2u);
        for (std::size_t k = 0; k < 3; ++k) {
            // The error is a multiple of cos(2 pi x), largest at x = 0.
            EXPECT_NEAR(rep.sup_errors[k], std::abs(f0_cos_analytic(r, sigmas[k], 0.0) - 1.0), 1e-7);
        }
        EXPECT_DOUBLE_EQ(rep.expected_ratios[0], std::pow(0.5, r));
    }
    // Far enough into the small-sigma range the r = 2 ratio is close to 1/4.
    const auto fine = approximation_decay(cos2pi, 2, {0.1, 0.05, 0.025});
    EXPECT_NEAR(fine.ratios[1], 0.25, 0.02);
    EXPECT_THROW(approximation_decay(cos2pi, 2, {0.1}), ConfigError);
}
