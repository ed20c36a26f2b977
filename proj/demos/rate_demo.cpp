// Fits one synthetic dataset per q under the scheduled sigma and lambda and
// prints the test error next to the solver diagnostics.

#include <cstdio>

#include "lqreg/lqreg.hpp"

int main() {
    using namespace lqreg;
    TargetSpec spec;
    spec.amplitude = 0.5;
    const Target target = make_target(spec);
    const long long m = 400;
    const Dataset data = sample_dataset(target, m, NoiseSpec{0.3}, 1.0, 11);

    SolverConfig cfg;
    cfg.max_iters = 3000;
    std::printf("%5s %10s %10s %12s %6s %s\n", "q", "sigma", "lambda", "l2 error", "iters", "status");
    for (double q : {0.5, 1.0, 2.0, 4.0}) {
        const Schedule s = schedule(m, 2.0, 1, q, 1.0, ScheduleVariant::proof_section);
        const KernelParams kp(s.sigma);
        const FitResult fit = fit_coefficients(gram_matrix(data.X, kp), data.y, PenaltySpec(q, s.lambda), cfg);
        const auto err = l2_rho_error(CoefficientModel(kp, data.X, fit.coeffs), target, 1.0, 5000, 12);
        std::printf("%5.2f %10.4g %10.3g %12.4g %6d %s\n", q, s.sigma, s.lambda, err.mean, fit.iterations,
                    std::string(to_string(fit.optimality)).c_str());
    }
}
