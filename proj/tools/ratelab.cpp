// ratelab: fit, predict, generate data, run the oracle checks and rate sweeps.
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical or solver
// failure, 3 a check ran but did not pass.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lqreg/check/prox_oracle.hpp"
#include "lqreg/lqreg.hpp"

namespace {

using nlohmann::json;
using namespace lqreg;

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_numerical = 2;
constexpr int exit_check_failed = 3;

void write_output(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        io::write_text_file(path, text);
    }
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        out.push_back(io::detail::parse_double(item, 0));
    }
    return out;
}

struct SolverFlags {
    std::string method = "prox-grad";
    int max_iters = SolverConfig{}.max_iters;
    double tol = SolverConfig{}.tol;
    std::string step_rule = "fixed-lipschitz";
    std::string init = "zeros";

    void add(CLI::App* cmd) {
        cmd->add_option("--solver", method, "closed-form-q2, prox-grad or irls")->capture_default_str();
        cmd->add_option("--max-iters", max_iters)->capture_default_str();
        cmd->add_option("--tol", tol)->capture_default_str();
        cmd->add_option("--step-rule", step_rule, "fixed-lipschitz or backtracking")->capture_default_str();
        cmd->add_option("--init", init, "zeros or rls-warm-start")->capture_default_str();
    }

    SolverConfig config() const {
        SolverConfig cfg;
        cfg.method = parse_solver_method(method);
        cfg.max_iters = max_iters;
        cfg.tol = tol;
        cfg.step_rule = parse_step_rule(step_rule);
        cfg.init = parse_init_rule(init);
        cfg.validate();
        return cfg;
    }
};

std::optional<double> optional_flag(CLI::Option* opt, double value) {
    return opt->count() > 0 ? std::optional<double>(value) : std::nullopt;
}

json decomposition_json(const DecompositionReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"D_hat", opt(r.D_hat)}, {"S_hat", opt(r.S_hat)}, {"P_hat", r.P_hat},
            {"P_bound", r.P_bound},  {"lhs", r.lhs},           {"rhs", r.rhs},
            {"chain_holds", r.chain_holds}, {"certified", r.certified}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"l^q coefficient regularization in Gaussian sample dependent hypothesis spaces"};
    app.require_subcommand(1);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "fit coefficients on a dataset CSV");
    std::string fit_data;
    std::string fit_out;
    double fit_q = 1.0;
    double fit_lambda = 0.0;
    double fit_sigma = 0.0;
    double fit_M = 1.0;
    bool fit_no_domain = false;
    SolverFlags fit_solver;
    fit_cmd->add_option("--data", fit_data)->required();
    fit_cmd->add_option("--q", fit_q)->required();
    fit_cmd->add_option("--lambda", fit_lambda)->required();
    fit_cmd->add_option("--sigma", fit_sigma)->required();
    auto* fit_M_opt = fit_cmd->add_option("--M", fit_M, "output bound (default: metadata sidecar)");
    fit_cmd->add_option("--out", fit_out, "model JSON path (default: stdout)");
    fit_cmd->add_flag("--no-domain-check", fit_no_domain, "accept inputs outside [0,1]^d");
    fit_solver.add(fit_cmd);

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "evaluate a fitted model on the x columns of a CSV");
    std::string pred_model;
    std::string pred_data;
    std::string pred_out;
    bool pred_clip = false;
    pred_cmd->add_option("--model", pred_model)->required();
    pred_cmd->add_option("--data", pred_data)->required();
    pred_cmd->add_option("--out", pred_out, "CSV path (default: stdout)");
    pred_cmd->add_flag("--clip", pred_clip, "clip predictions to [-M, M]");

    // gen
    auto* gen_cmd = app.add_subcommand("gen", "sample a synthetic dataset");
    TargetSpec gen_target;
    gen_target.amplitude = 0.5;
    std::string gen_family = "cosine";
    long long gen_m = 0;
    double gen_noise = 0.0;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen_cmd->add_option("--family", gen_family, "cosine, kink or gauss-bump")->capture_default_str();
    gen_cmd->add_option("--m", gen_m)->required();
    gen_cmd->add_option("--M", gen_target.M)->capture_default_str();
    gen_cmd->add_option("--noise", gen_noise, "uniform noise half-width")->capture_default_str();
    gen_cmd->add_option("--seed", gen_seed)->capture_default_str();
    gen_cmd->add_option("--d", gen_target.d)->capture_default_str();
    gen_cmd->add_option("--amplitude", gen_target.amplitude)->capture_default_str();
    gen_cmd->add_option("--frequency", gen_target.frequency)->capture_default_str();
    gen_cmd->add_option("--center", gen_target.center)->capture_default_str();
    gen_cmd->add_option("--exponent", gen_target.exponent)->capture_default_str();
    gen_cmd->add_option("--width", gen_target.width)->capture_default_str();
    gen_cmd->add_option("--nominal-r", gen_target.nominal_r)->capture_default_str();
    gen_cmd->add_option("--out", gen_out)->required();

    // prox-check
    auto* prox_cmd = app.add_subcommand("prox-check", "compare the scalar prox against a grid oracle");
    int prox_cases = 200;
    std::uint64_t prox_seed = 1;
    prox_cmd->add_option("--cases", prox_cases)->capture_default_str();
    prox_cmd->add_option("--seed", prox_seed)->capture_default_str();

    // approx-check
    auto* approx_cmd = app.add_subcommand("approx-check", "sup-grid error decay of f0 for cos(2 pi x)");
    int approx_r = 2;
    std::string approx_sigmas = "0.2,0.1,0.05";
    double approx_tol = 0.25;
    int approx_grid = 512;
    approx_cmd->add_option("--r", approx_r)->capture_default_str();
    approx_cmd->add_option("--sigma-list", approx_sigmas)->capture_default_str();
    approx_cmd->add_option("--tolerance", approx_tol, "relative tolerance on each ratio")->capture_default_str();
    approx_cmd->add_option("--grid", approx_grid)->capture_default_str();

    // decompose
    auto* dec_cmd = app.add_subcommand("decompose", "fit under the schedule and check the error chain");
    std::string dec_data;
    double dec_q = 1.0;
    std::string dec_schedule = "proof";
    double dec_r = 2.0;
    double dec_M = 1.0;
    double dec_lambda = 0.0;
    double dec_sigma = 0.0;
    SolverFlags dec_solver;
    dec_cmd->add_option("--data", dec_data)->required();
    dec_cmd->add_option("--q", dec_q)->required();
    dec_cmd->add_option("--schedule", dec_schedule, "theorem or proof")->capture_default_str();
    auto* dec_r_opt = dec_cmd->add_option("--r", dec_r, "smoothness (default: metadata nominal_r, else 2)");
    auto* dec_M_opt = dec_cmd->add_option("--M", dec_M, "output bound (default: metadata sidecar)");
    auto* dec_lambda_opt = dec_cmd->add_option("--lambda", dec_lambda, "override the scheduled lambda");
    auto* dec_sigma_opt = dec_cmd->add_option("--sigma", dec_sigma, "override the scheduled sigma");
    dec_solver.add(dec_cmd);

    // rate-sweep
    auto* sweep_cmd = app.add_subcommand("rate-sweep", "run a (q, m, trial) sweep and fit rates");
    std::string sweep_config;
    std::string sweep_out;
    std::string sweep_format = "json";
    int sweep_parallelism = 0;
    sweep_cmd->add_option("--config", sweep_config)->required();
    sweep_cmd->add_option("--out", sweep_out, "report path (default: stdout)");
    sweep_cmd->add_option("--format", sweep_format, "json, csv or plotdata")->capture_default_str();
    sweep_cmd->add_option("--parallelism", sweep_parallelism, "worker count (default: config value)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*fit_cmd) {
            const auto data = io::read_dataset(fit_data, optional_flag(fit_M_opt, fit_M), !fit_no_domain);
            const PenaltySpec spec(fit_q, fit_lambda);
            const KernelParams kp(fit_sigma);
            const Matrix G = gram_matrix(data.X, kp);
            const FitResult fit = fit_coefficients(G, data.y, spec, fit_solver.config());
            const io::ModelFile mf{CoefficientModel(kp, data.X, fit.coeffs), fit_q, fit_lambda, data.M,
                                   io::solver_metadata(fit)};
            write_output(io::model_to_json(mf).dump(2) + "\n", fit_out);
            if (!fit.converged) {
                std::cerr << "warning: solver stopped at max_iters without meeting the tolerance\n";
            }
            return exit_ok;
        }

        if (*pred_cmd) {
            const auto mf = io::model_from_json(io::read_json_file(pred_model));
            const auto table = io::read_csv_table(pred_data);
            const Vector f = predict_all(mf.model, table.X);
            Dataset out{table.X, f, mf.M};
            if (pred_clip) {
                for (Eigen::Index i = 0; i < f.size(); ++i) out.y[i] = clip(f[i], mf.M);
            }
            write_output(io::dataset_csv(out), pred_out);
            return exit_ok;
        }

        if (*gen_cmd) {
            gen_target.family = parse_target_family(gen_family);
            const Target target = make_target(gen_target);
            const auto data = sample_dataset(target, gen_m, NoiseSpec{gen_noise}, gen_target.M, gen_seed);
            io::write_dataset(gen_out, data,
                              {{"target", to_json(gen_target)}, {"noise_halfwidth", gen_noise}, {"seed", gen_seed}});
            return exit_ok;
        }

        if (*prox_cmd) {
            if (prox_cases < 1) {
                throw ConfigError("--cases must be >= 1");
            }
            const auto res = check::run_prox_suite(prox_cases, prox_seed);
            std::cout << res.to_json().dump(2) << "\n";
            return res.passed() ? exit_ok : exit_check_failed;
        }

        if (*approx_cmd) {
            const auto target = [](double x) { return std::cos(2.0 * std::numbers::pi * x); };
            const auto rep = approximation_decay(target, approx_r, parse_list(approx_sigmas), approx_grid, approx_tol);
            std::cout << json{{"target", "cos(2 pi x)"},
                              {"r", rep.r},
                              {"sigmas", rep.sigmas},
                              {"sup_errors", rep.sup_errors},
                              {"ratios", rep.ratios},
                              {"expected_ratios", rep.expected_ratios},
                              {"relative_tolerance", rep.rel_tolerance},
                              {"within_tolerance", rep.within_tolerance}}
                             .dump(2)
                      << "\n";
            return rep.within_tolerance ? exit_ok : exit_check_failed;
        }

        if (*dec_cmd) {
            const std::filesystem::path csv = dec_data;
            const auto meta_file = io::metadata_path(csv);
            const json meta = std::filesystem::exists(meta_file) ? io::read_json_file(meta_file) : json::object();
            const auto data = io::read_dataset(csv, optional_flag(dec_M_opt, dec_M));
            std::optional<TargetSpec> tspec;
            if (meta.contains("target")) {
                tspec = target_from_json(meta.at("target"));
            }
            const double r = dec_r_opt->count() > 0 ? dec_r : (tspec ? tspec->nominal_r : 2.0);
            const auto m = static_cast<long long>(data.size());
            Schedule sched = schedule(m, r, static_cast<int>(data.dim()), dec_q, data.M,
                                      parse_schedule_variant(dec_schedule));
            if (dec_lambda_opt->count() > 0) sched.lambda = dec_lambda;
            if (dec_sigma_opt->count() > 0) sched.sigma = dec_sigma;
            const KernelParams kp(sched.sigma);
            const PenaltySpec spec(dec_q, sched.lambda);
            const FitResult fit = fit_coefficients(gram_matrix(data.X, kp), data.y, spec, dec_solver.config());
            const CoefficientModel model(kp, data.X, fit.coeffs);

            std::optional<TargetContext> ctx;
            if (tspec && data.dim() == 1) {
                const double h = meta.value("noise_halfwidth", 0.0);
                auto target = std::make_shared<Target>(make_target(*tspec));
                ctx = TargetContext{[target](double x) { return target->at(x); }, r, h * h / 3.0, 512};
            }
            const auto rep = decompose_check(data, model, spec, ctx);
            json out = decomposition_json(rep);
            out["m"] = m;
            out["q"] = dec_q;
            out["sigma"] = sched.sigma;
            out["lambda"] = sched.lambda;
            out["schedule"] = std::string(to_string(sched.variant));
            out["r"] = r;
            out["solver"] = io::solver_metadata(fit);
            std::cout << out.dump(2) << "\n";
            return exit_ok;
        }

        if (*sweep_cmd) {
            auto cfg = sweep_config_from_json(io::read_json_file(sweep_config));
            if (sweep_parallelism > 0) {
                cfg.parallelism = sweep_parallelism;
            }
            const auto format = parse_report_format(sweep_format);
            const auto report = run_sweep(cfg);
            write_output(render_report(report, format), sweep_out);
            for (const auto& c : report.cells) {
                if (c.status != CellStatus::ok) {
                    std::cerr << "warning: cell q=" << c.q << " m=" << c.m << " " << to_string(c.status) << "\n";
                }
            }
            return exit_ok;
        }
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numerical;
    }
    return exit_usage;
}
