#pragma once

// Learning-rate sweeps: (q, m, trial) grids under the theoretical schedules,
// log-log rate fits and report serialization (json, csv, plotdata).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "penalty.hpp"
#include "solvers.hpp"
#include "synth.hpp"
#include "theory.hpp"

namespace lqreg {

inline constexpr int report_schema_version = 1;

struct SweepConfig {
    TargetSpec target;
    double noise_halfwidth = 0.0;
    std::vector<double> q_list;
    std::vector<long long> m_list;
    int trials = 1;
    double r = 2.0;
    int d = 1;
    double M = 1.0;
    ScheduleVariant schedule_variant = ScheduleVariant::proof_section;
    SolverConfig solver;
    long long n_test = 2000;
    std::uint64_t master_seed = 0;
    int parallelism = 1;
    /// Fit slopes on the upper half of m_list (default) or on every m.
    bool slope_all_points = false;
    double cell_budget_seconds = 60.0;
    /// Run decompose_check on every fit and report the chain-holds rate.
    bool chain_check = true;

    void validate() const {
        if (q_list.empty()) {
            throw ConfigError("q_list must not be empty");
        }
        for (double q : q_list) {
            PenaltySpec(q, 1.0);
        }
        if (m_list.size() < 2) {
            throw ConfigError("m_list needs at least two values");
        }
        for (std::size_t i = 0; i < m_list.size(); ++i) {
            if (m_list[i] < 1 || (i > 0 && m_list[i] <= m_list[i - 1])) {
                throw ConfigError("m_list must be strictly increasing positive integers");
            }
        }
        if (trials < 1) {
            throw ConfigError("trials must be >= 1");
        }
        if (!(r > 0.0) || d < 1 || !(M > 0.0)) {
            throw ConfigError("schedule inputs need r > 0, d >= 1, M > 0");
        }
        if (target.d != d) {
            throw ConfigError("target dimension differs from the schedule dimension d");
        }
        if (n_test < 1) {
            throw ConfigError("n_test must be >= 1");
        }
        if (parallelism < 1) {
            throw ConfigError("parallelism must be >= 1");
        }
        if (!(cell_budget_seconds > 0.0)) {
            throw ConfigError("cell_budget_seconds must be positive");
        }
        solver.validate();
        if (make_target(target).sup_abs() + noise_halfwidth > M) {
            throw ConfigError("sup|f| + noise_halfwidth exceeds M");
        }
    }
};

enum class CellStatus { ok, incomplete, failed, timeout };

inline std::string_view to_string(CellStatus s) {
    switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::incomplete: return "incomplete";
    case CellStatus::failed: return "failed";
    case CellStatus::timeout: return "timeout";
    }
    return "?";
}

inline CellStatus parse_cell_status(std::string_view s) {
    if (s == "ok") return CellStatus::ok;
    if (s == "incomplete") return CellStatus::incomplete;
    if (s == "failed") return CellStatus::failed;
    if (s == "timeout") return CellStatus::timeout;
    throw InputError("unknown cell status '" + std::string(s) + "'");
}

struct CellResult {
    double q = 0.0;
    long long m = 0;
    double sigma = 0.0;
    double lambda = 0.0;
    int n_trials = 0;
    int n_failed = 0;
    std::optional<double> mean_error;
    std::optional<double> std_error;
    std::optional<double> mean_iterations;
    std::optional<double> converged_rate;
    std::optional<double> chain_holds_rate;
    CellStatus status = CellStatus::ok;
    std::vector<std::string> errors;

    bool operator==(const CellResult&) const = default;
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    /// Absent with exactly two points (no residual degrees of freedom).
    std::optional<double> slope_se;
    int n_points = 0;
    std::vector<std::string> warnings;
};

struct SlopeSummary {
    double q = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::optional<double> slope_se;
    std::vector<long long> m_used;

    bool operator==(const SlopeSummary&) const = default;
};

struct SweepReport {
    int schema_version = report_schema_version;
    nlohmann::json config;
    double reference_slope = 0.0;
    std::vector<CellResult> cells;
    std::vector<SlopeSummary> slopes;
    std::vector<std::string> notes;

    bool operator==(const SweepReport&) const = default;
};

/// OLS of log(error) on log(m). Nonpositive errors are dropped with a warning.
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
    RateFit fit;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [m, err] : points) {
        if (!(err > 0.0) || !(m > 0.0) || !std::isfinite(err)) {
            std::ostringstream w;
            w << "dropped point m=" << m << " error=" << err << " (not positive)";
            fit.warnings.push_back(w.str());
            continue;
        }
        xs.push_back(std::log(m));
        ys.push_back(std::log(err));
    }
    const auto n = static_cast<double>(xs.size());
    if (xs.size() < 2) {
        throw InputError("fit_rate needs at least two points with positive error");
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) {
        throw InputError("fit_rate needs at least two distinct m values");
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.n_points = static_cast<int>(xs.size());
    if (xs.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double res = ys[i] - (fit.intercept + fit.slope * xs[i]);
            rss += res * res;
        }
        fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
    }
    return fit;
}

// ---------------------------------------------------------------------------
// JSON mapping

inline nlohmann::json to_json(const TargetSpec& t) {
    return {{"family", std::string(to_string(t.family))},
            {"amplitude", t.amplitude},
            {"frequency", t.frequency},
            {"center", t.center},
            {"exponent", t.exponent},
            {"width", t.width},
            {"d", t.d},
            {"M", t.M},
            {"nominal_r", t.nominal_r}};
}

inline TargetSpec target_from_json(const nlohmann::json& j) {
    TargetSpec t;
    t.family = parse_target_family(j.at("family").get<std::string>());
    t.amplitude = j.value("amplitude", t.amplitude);
    t.frequency = j.value("frequency", t.frequency);
    t.center = j.value("center", t.center);
    t.exponent = j.value("exponent", t.exponent);
    t.width = j.value("width", t.width);
    t.d = j.value("d", t.d);
    t.M = j.value("M", t.M);
    t.nominal_r = j.value("nominal_r", t.nominal_r);
    return t;
}

inline nlohmann::json to_json(const SolverConfig& s) {
    return {{"method", std::string(to_string(s.method))},
            {"max_iters", s.max_iters},
            {"tol", s.tol},
            {"step_rule", std::string(to_string(s.step_rule))},
            {"init", std::string(to_string(s.init))},
            {"irls_epsilon_floor", s.irls_epsilon_floor},
            {"accelerate", s.accelerate}};
}

inline SolverConfig solver_from_json(const nlohmann::json& j) {
    SolverConfig s;
    if (j.contains("method")) s.method = parse_solver_method(j.at("method").get<std::string>());
    s.max_iters = j.value("max_iters", s.max_iters);
    s.tol = j.value("tol", s.tol);
    if (j.contains("step_rule")) s.step_rule = parse_step_rule(j.at("step_rule").get<std::string>());
    if (j.contains("init")) s.init = parse_init_rule(j.at("init").get<std::string>());
    s.irls_epsilon_floor = j.value("irls_epsilon_floor", s.irls_epsilon_floor);
    s.accelerate = j.value("accelerate", s.accelerate);
    return s;
}

/// Config echo. parallelism is omitted: it never changes results.
inline nlohmann::json to_json(const SweepConfig& c) {
    return {{"target", to_json(c.target)},
            {"noise_halfwidth", c.noise_halfwidth},
            {"q_list", c.q_list},
            {"m_list", c.m_list},
            {"trials", c.trials},
            {"r", c.r},
            {"d", c.d},
            {"M", c.M},
            {"schedule_variant", std::string(to_string(c.schedule_variant))},
            {"solver", to_json(c.solver)},
            {"n_test", c.n_test},
            {"master_seed", c.master_seed},
            {"slope_points", c.slope_all_points ? "all" : "upper-half"},
            {"cell_budget_seconds", c.cell_budget_seconds},
            {"chain_check", c.chain_check}};
}

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
    try {
        SweepConfig c;
        c.target = target_from_json(j.at("target"));
        c.noise_halfwidth = j.value("noise_halfwidth", c.noise_halfwidth);
        c.q_list = j.at("q_list").get<std::vector<double>>();
        c.m_list = j.at("m_list").get<std::vector<long long>>();
        c.trials = j.value("trials", c.trials);
        c.r = j.value("r", c.r);
        c.d = j.value("d", c.d);
        c.M = j.value("M", c.M);
        if (j.contains("schedule_variant")) {
            c.schedule_variant = parse_schedule_variant(j.at("schedule_variant").get<std::string>());
        }
        if (j.contains("solver")) {
            c.solver = solver_from_json(j.at("solver"));
        }
        c.n_test = j.value("n_test", c.n_test);
        c.master_seed = j.value("master_seed", c.master_seed);
        c.parallelism = j.value("parallelism", c.parallelism);
        if (j.contains("slope_points")) {
            const auto sp = j.at("slope_points").get<std::string>();
            if (sp != "all" && sp != "upper-half") {
                throw ConfigError("slope_points must be 'all' or 'upper-half'");
            }
            c.slope_all_points = sp == "all";
        }
        c.cell_budget_seconds = j.value("cell_budget_seconds", c.cell_budget_seconds);
        c.chain_check = j.value("chain_check", c.chain_check);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed sweep config: ") + e.what());
    }
}

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

} // namespace detail

inline nlohmann::json to_json(const SweepReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        cells.push_back({{"q", c.q},
                         {"m", c.m},
                         {"sigma", c.sigma},
                         {"lambda", c.lambda},
                         {"n_trials", c.n_trials},
                         {"n_failed", c.n_failed},
                         {"mean_error", detail::opt(c.mean_error)},
                         {"std_error", detail::opt(c.std_error)},
                         {"mean_iterations", detail::opt(c.mean_iterations)},
                         {"converged_rate", detail::opt(c.converged_rate)},
                         {"chain_holds_rate", detail::opt(c.chain_holds_rate)},
                         {"status", std::string(to_string(c.status))},
                         {"errors", c.errors}});
    }
    nlohmann::json slopes = nlohmann::json::array();
    for (const auto& s : r.slopes) {
        slopes.push_back({{"q", s.q},
                          {"slope", s.slope},
                          {"intercept", s.intercept},
                          {"slope_se", detail::opt(s.slope_se)},
                          {"m_used", s.m_used}});
    }
    return {{"schema_version", r.schema_version},
            {"config", r.config},
            {"reference_slope", r.reference_slope},
            {"cells", std::move(cells)},
            {"slopes", std::move(slopes)},
            {"notes", r.notes}};
}

inline SweepReport sweep_report_from_json(const nlohmann::json& j) {
    try {
        SweepReport r;
        r.schema_version = j.at("schema_version").get<int>();
        if (r.schema_version != report_schema_version) {
            throw InputError("unsupported report schema version " + std::to_string(r.schema_version));
        }
        r.config = j.at("config");
        r.reference_slope = j.at("reference_slope").get<double>();
        for (const auto& c : j.at("cells")) {
            CellResult cell;
            cell.q = c.at("q").get<double>();
            cell.m = c.at("m").get<long long>();
            cell.sigma = c.at("sigma").get<double>();
            cell.lambda = c.at("lambda").get<double>();
            cell.n_trials = c.at("n_trials").get<int>();
            cell.n_failed = c.at("n_failed").get<int>();
            cell.mean_error = detail::opt_from(c, "mean_error");
            cell.std_error = detail::opt_from(c, "std_error");
            cell.mean_iterations = detail::opt_from(c, "mean_iterations");
            cell.converged_rate = detail::opt_from(c, "converged_rate");
            cell.chain_holds_rate = detail::opt_from(c, "chain_holds_rate");
            cell.status = parse_cell_status(c.at("status").get<std::string>());
            cell.errors = c.at("errors").get<std::vector<std::string>>();
            r.cells.push_back(std::move(cell));
        }
        for (const auto& s : j.at("slopes")) {
            r.slopes.push_back({s.at("q").get<double>(), s.at("slope").get<double>(), s.at("intercept").get<double>(),
                                detail::opt_from(s, "slope_se"), s.at("m_used").get<std::vector<long long>>()});
        }
        r.notes = j.at("notes").get<std::vector<std::string>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed report: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Sweep execution

namespace detail {

struct TrialOutcome {
    double error;
    int iterations;
    bool converged;
    std::optional<bool> chain_holds;
};

inline TrialOutcome run_trial(const SweepConfig& cfg, const Target& target, double q, long long m, int trial) {
    const Schedule sched = schedule(m, cfg.r, cfg.d, q, cfg.M, cfg.schedule_variant);
    const Dataset data = sample_dataset(target, m, NoiseSpec{cfg.noise_halfwidth}, cfg.M,
                                        derive_seed(cfg.master_seed, m, q, trial, SeedStream::data));
    const KernelParams kp(sched.sigma);
    const Matrix G = gram_matrix(data.X, kp);
    const PenaltySpec spec(q, sched.lambda);
    const FitResult fit = fit_coefficients(G, data.y, spec, cfg.solver);
    const CoefficientModel model(kp, data.X, fit.coeffs);
    const auto err = l2_rho_error(model, target, cfg.M, cfg.n_test,
                                  derive_seed(cfg.master_seed, m, q, trial, SeedStream::test));
    TrialOutcome out{err.mean, fit.iterations, fit.converged, std::nullopt};
    if (cfg.chain_check) {
        out.chain_holds = decompose_check(data, model, spec).chain_holds;
    }
    return out;
}

inline CellResult run_cell(const SweepConfig& cfg, const Target& target, double q, long long m) {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::duration_cast<clock::duration>(
                                             std::chrono::duration<double>(cfg.cell_budget_seconds));
    CellResult cell;
    cell.q = q;
    cell.m = m;
    const Schedule sched = schedule(m, cfg.r, cfg.d, q, cfg.M, cfg.schedule_variant);
    cell.sigma = sched.sigma;
    cell.lambda = sched.lambda;

    std::vector<TrialOutcome> done;
    bool timed_out = false;
    for (int t = 0; t < cfg.trials; ++t) {
        if (t > 0 && clock::now() > deadline) {
            timed_out = true;
            break;
        }
        try {
            done.push_back(run_trial(cfg, target, q, m, t));
        } catch (const Error& e) {
            ++cell.n_failed;
            cell.errors.push_back("trial " + std::to_string(t) + ": " + e.what());
        }
    }
    cell.n_trials = static_cast<int>(done.size());
    if (!done.empty()) {
        const double n = static_cast<double>(done.size());
        double sum = 0.0;
        double iters = 0.0;
        double conv = 0.0;
        double chain = 0.0;
        for (const auto& o : done) {
            sum += o.error;
            iters += o.iterations;
            conv += o.converged ? 1.0 : 0.0;
            chain += o.chain_holds.value_or(false) ? 1.0 : 0.0;
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& o : done) {
            ss += (o.error - mean) * (o.error - mean);
        }
        cell.mean_error = mean;
        cell.std_error = done.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
        cell.mean_iterations = iters / n;
        cell.converged_rate = conv / n;
        if (cfg.chain_check) {
            cell.chain_holds_rate = chain / n;
        }
    }
    if (timed_out) {
        cell.status = CellStatus::timeout;
        cell.errors.push_back("cell budget of " + std::to_string(cfg.cell_budget_seconds) + " s exhausted after " +
                              std::to_string(done.size() + static_cast<std::size_t>(cell.n_failed)) + " trials");
    } else if (done.empty()) {
        cell.status = CellStatus::failed;
    } else if (cell.n_failed > 0) {
        cell.status = CellStatus::incomplete;
    }
    return cell;
}

} // namespace detail

/// Runs every (q, m) cell on a pool of cfg.parallelism workers. Cell results are
/// keyed by cell index, so the report does not depend on scheduling.
inline SweepReport run_sweep(const SweepConfig& cfg) {
    cfg.validate();
    const Target target = make_target(cfg.target);

    struct CellKey {
        double q;
        long long m;
    };
    std::vector<CellKey> keys;
    for (double q : cfg.q_list) {
        for (long long m : cfg.m_list) {
            keys.push_back({q, m});
        }
    }
    std::vector<CellResult> results(keys.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < keys.size(); i = next.fetch_add(1)) {
            results[i] = detail::run_cell(cfg, target, keys[i].q, keys[i].m);
        }
    };
    {
        const auto n_workers = static_cast<std::size_t>(std::max(1, cfg.parallelism));
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < std::min(n_workers, keys.size()); ++w) {
            pool.emplace_back(worker);
        }
        worker();
    }

    SweepReport report;
    report.config = to_json(cfg);
    report.reference_slope = reference_exponent(cfg.r, cfg.d);
    report.cells = std::move(results);
    report.notes.push_back(
        "grid ranges, trial counts, noise level and target are artifact choices; only the exponent and its "
        "q-independence are meaningful, not the constants");

    const std::size_t n_m = cfg.m_list.size();
    const std::size_t upper_start = cfg.slope_all_points ? 0 : n_m / 2;
    for (std::size_t qi = 0; qi < cfg.q_list.size(); ++qi) {
        auto collect = [&](std::size_t from) {
            std::vector<std::pair<double, double>> pts;
            std::vector<long long> ms;
            for (std::size_t mi = from; mi < n_m; ++mi) {
                const auto& cell = report.cells[qi * n_m + mi];
                if (cell.mean_error && *cell.mean_error > 0.0) {
                    pts.emplace_back(static_cast<double>(cell.m), *cell.mean_error);
                    ms.push_back(cell.m);
                }
            }
            return std::make_pair(pts, ms);
        };
        auto [pts, ms] = collect(upper_start);
        if (pts.size() < 2) {
            std::tie(pts, ms) = collect(0);
        }
        if (pts.size() < 2) {
            report.notes.push_back("no slope for q=" + io::format_double(cfg.q_list[qi]) +
                                   ": fewer than two m values succeeded");
            continue;
        }
        const RateFit fit = fit_rate(pts);
        report.slopes.push_back({cfg.q_list[qi], fit.slope, fit.intercept, fit.slope_se, ms});
    }
    return report;
}

// ---------------------------------------------------------------------------
// Emission

enum class ReportFormat { json, csv, plotdata };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "plotdata") return ReportFormat::plotdata;
    throw ConfigError("unknown report format '" + std::string(s) + "'");
}

inline std::string render_report(const SweepReport& report, ReportFormat format) {
    using io::format_double;
    auto opt_str = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
    std::string out;
    switch (format) {
    case ReportFormat::json:
        out = to_json(report).dump(2) + "\n";
        break;
    case ReportFormat::csv:
        out = "row,q,m,mean_error,std_error,n_trials,status,slope,intercept,slope_se\n";
        for (const auto& c : report.cells) {
            out += "cell," + format_double(c.q) + "," + std::to_string(c.m) + "," + opt_str(c.mean_error) + "," +
                   opt_str(c.std_error) + "," + std::to_string(c.n_trials) + "," + std::string(to_string(c.status)) +
                   ",,,\n";
        }
        for (const auto& s : report.slopes) {
            out += "slope," + format_double(s.q) + ",,,,,," + format_double(s.slope) + "," +
                   format_double(s.intercept) + "," + opt_str(s.slope_se) + "\n";
        }
        break;
    case ReportFormat::plotdata: {
        std::vector<double> qs;
        for (const auto& c : report.cells) {
            if (std::find(qs.begin(), qs.end(), c.q) == qs.end()) {
                qs.push_back(c.q);
            }
        }
        out = "# reference_slope " + format_double(report.reference_slope) + "\n";
        for (double q : qs) {
            out += "# q=" + format_double(q) + "\n# log10(m) log10(mean_error)\n";
            for (const auto& c : report.cells) {
                if (c.q == q && c.mean_error && *c.mean_error > 0.0) {
                    out += format_double(std::log10(static_cast<double>(c.m))) + " " +
                           format_double(std::log10(*c.mean_error)) + "\n";
                }
            }
            out += "\n\n";
        }
        break;
    }
    }
    return out;
}

inline void emit_report(const SweepReport& report, const std::filesystem::path& path, ReportFormat format) {
    io::write_text_file(path, render_report(report, format));
}

inline SweepReport read_report(const std::filesystem::path& path) {
    return sweep_report_from_json(io::read_json_file(path));
}

} // namespace lqreg
