#include "diffkl/experiment.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "diffkl/analysis.hpp"
#include "diffkl/localization.hpp"
#include "diffkl/parallel.hpp"
#include "diffkl/sampler.hpp"

namespace diffkl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RunContext {
    const ExperimentConfig& cfg;
    Target target;
    TimeGrid grid;
    Seed seed;
    RunRecord& record;
    bool write_reports = true;

    ResultRow row(const std::string& quantity, double value, double std_err = 0.0, double bound = kNaN,
                  double ratio = kNaN) const {
        ResultRow r;
        r.quantity = quantity;
        r.value = value;
        r.std_err = std_err;
        r.bound = bound;
        r.ratio = ratio;
        r.n_paths = cfg.n_paths;
        r.seed = seed.value;
        r.grid_hash = grid.hash();
        return r;
    }

    void add(ResultRow r) {
        if (!r.passed) record.passed = false;
        record.results.push_back(std::move(r));
    }

    ScoreOracle oracle() const {
        ScoreOracle exact = exact_oracle(target);
        if (!cfg.perturbation) return exact;
        return perturb_oracle(exact, *cfg.perturbation, grid);
    }
};

bool row_passes(const ReportRow& row, const SuiteSpec& suite) {
    if (row.skipped) return true;
    if (row.std_err > 0.0) return std::abs(row.z_score) <= suite.z_tolerance;
    return row.abs_diff() <= suite.tolerance * std::max(1.0, std::abs(row.rhs));
}

// Summary results for one verification report, plus its CSV artifact.
void summarize_report(RunContext& ctx, const std::string& name, const std::string& time_label,
                      const std::vector<ReportRow>& rows) {
    double max_z = 0.0, max_rel = 0.0;
    std::size_t failures = 0;
    for (const auto& r : rows) {
        if (r.skipped) continue;
        if (r.std_err > 0.0) max_z = std::max(max_z, std::abs(r.z_score));
        max_rel = std::max(max_rel, r.abs_diff() / std::max(1.0, std::abs(r.rhs)));
        if (!row_passes(r, ctx.cfg.suite)) ++failures;
    }
    ctx.add(ctx.row(name + "_rows", static_cast<double>(rows.size())));
    ctx.add(ctx.row(name + "_max_abs_z", max_z, 0.0, ctx.cfg.suite.z_tolerance, max_z / ctx.cfg.suite.z_tolerance));
    ctx.add(ctx.row(name + "_max_rel_diff", max_rel));
    ResultRow fail_row = ctx.row(name + "_failures", static_cast<double>(failures));
    fail_row.passed = failures == 0;
    ctx.add(fail_row);
    if (ctx.write_reports) {
        std::ostringstream os;
        write_report_csv(os, time_label, rows);
        ctx.record.artifacts[name + ".csv"] = os.str();
    }
}

ExpectationMethod pick_method(const RunContext& ctx) {
    if (ctx.cfg.suite.method) return *ctx.cfg.suite.method;
    if (ctx.target.is_single_component()) return ExpectationMethod::closed_form;
    if (ctx.target.dim() == 1) return ExpectationMethod::quadrature;
    return ExpectationMethod::monte_carlo;
}

void run_identities(RunContext& ctx) {
    const auto method = pick_method(ctx);
    std::vector<ReportRow> rows;
    for (std::size_t i = 0; i < ctx.cfg.suite.times.size(); ++i) {
        auto part = expectation_identities(ctx.target, ctx.cfg.suite.times[i], method, ctx.cfg.suite.budget,
                                           ctx.seed.child(1, i));
        rows.insert(rows.end(), part.begin(), part.end());
    }
    summarize_report(ctx, "identities", "t", rows);
    const auto ode = check_covariance_ode(ctx.target, ctx.cfg.suite.times, ctx.cfg.suite.h, method,
                                          ctx.cfg.suite.budget, ctx.seed.child(2));
    summarize_report(ctx, "covariance_ode", "t", ode);
}

void run_localization(RunContext& ctx) {
    const auto& s_points = ctx.cfg.suite.s_points;
    summarize_report(ctx, "localization_equivalence", "s",
                     check_localization_equivalence(ctx.target, s_points, ctx.cfg.n_paths, ctx.seed.child(3)));
    if (ctx.target.is_atomic()) {
        summarize_report(ctx, "density_martingale", "s",
                         check_density_martingale(ctx.target, s_points, ctx.cfg.n_paths, ctx.seed.child(4)));
    }
    std::vector<double> positive;
    for (double s : s_points) {
        if (s > 0.0) positive.push_back(s);
    }
    summarize_report(ctx, "second_moment", "s",
                     check_second_moment_identity(ctx.target, positive, ctx.cfg.n_paths, ctx.seed.child(5)));
    // a_s by the time change against direct conditioning, on observed paths
    double max_diff = 0.0;
    if (!positive.empty()) {
        std::vector<double> grid{0.0};
        grid.insert(grid.end(), positive.begin(), positive.end());
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        const auto paths = sl_direct_path(ctx.target, grid, 100, ctx.seed.child(6));
        for (const auto& path : paths.paths) {
            for (std::size_t k = 1; k < grid.size(); ++k) {
                const Vector u = path.col(static_cast<Eigen::Index>(k));
                const auto a = sl_drift(ctx.target, u, grid[k]);
                const auto b = sl_drift_direct(ctx.target, u, grid[k]);
                const double scale = std::max(1.0, b.a.norm());
                max_diff = std::max(max_diff, (a.a - b.a).norm() / scale);
            }
        }
    }
    ResultRow r = ctx.row("drift_route_max_rel_diff", max_diff, 0.0, 1e-10, max_diff / 1e-10);
    r.passed = max_diff <= 1e-10;
    ctx.add(r);
}

void maybe_dump_samples(RunContext& ctx, const ScoreOracle& oracle) {
    if (ctx.cfg.dump == SampleDump::none || !ctx.write_reports) return;
    const Matrix samples = run_sampler(oracle, ctx.grid, SamplerInit::standard_gaussian, ctx.cfg.n_paths,
                                       ctx.seed.child(7));
    std::ostringstream os(std::ios::binary);
    if (ctx.cfg.dump == SampleDump::csv) {
        write_samples_csv(os, samples);
        ctx.record.artifacts["samples.csv"] = os.str();
    } else {
        write_samples_raw(os, samples, ctx.seed.value, ctx.grid.hash());
        ctx.record.artifacts["samples.bin"] = os.str();
    }
}

void run_kl_exact(RunContext& ctx) {
    if (!ctx.target.is_single_component()) {
        throw std::invalid_argument("kl-exact needs a Gaussian or point-mass target (affine score)");
    }
    const ScoreOracle oracle = ctx.oracle();
    const auto d = ctx.target.dim();
    const double loss = score_error_loss_structural(oracle, ctx.grid);
    const BoundReport bound = theorem_bound(loss, ctx.grid, d);
    const double kl_pi = chain_kl(ctx.target, oracle, ctx.grid, SamplerInit::standard_gaussian);
    const double kl_q = chain_kl(ctx.target, oracle, ctx.grid, SamplerInit::exact_q_T);
    const ForwardKL fwd = forward_kl(ctx.target, ctx.grid.horizon());
    const DecompositionReport decomposition = kl_decomposition_check(ctx.target, oracle, ctx.grid);

    ctx.add(ctx.row("kl_pi_start", kl_pi, 0.0, bound.total, kl_pi / bound.total));
    ctx.add(ctx.row("kl_q_start", kl_q));
    ResultRow f = ctx.row("forward_kl", fwd.exact, 0.0, fwd.bound, fwd.exact / fwd.bound);
    f.passed = !fwd.bound_valid || fwd.exact <= fwd.bound;
    ctx.add(f);
    ctx.add(ctx.row("forward_kl_convexity_bound", fwd.convexity_bound));
    ctx.add(ctx.row("score_error_loss", loss));
    ResultRow slack = ctx.row("decomposition_slack", decomposition.slack);
    slack.passed = decomposition.holds;
    ctx.add(slack);
    ctx.add(ctx.row("kappa", ctx.grid.kappa()));
    ctx.add(ctx.row("bound_score_term", bound.score_term));
    ctx.add(ctx.row("bound_disc_quadratic", bound.disc_quadratic));
    ctx.add(ctx.row("bound_disc_linear", bound.disc_linear));
    ctx.add(ctx.row("bound_forward_term", bound.forward_term));
    ctx.add(ctx.row("bound_total", bound.total));
    const GaussianLaw out = propagate_affine_chain(oracle, ctx.grid, GaussianLaw::standard(d));
    const double cond = condition_number(out.cov);
    if (cond > 1e8) ctx.add(ctx.row("output_cov_condition_number", cond));
    maybe_dump_samples(ctx, oracle);
}

void run_girsanov(RunContext& ctx) {
    const ScoreOracle oracle = ctx.oracle();
    const auto timing = ctx.cfg.suite.continuous_oracle ? OracleTiming::continuous : OracleTiming::frozen;
    const auto g = girsanov_rhs(ctx.target, oracle, ctx.grid, ctx.cfg.n_paths, ctx.cfg.suite.quad_points,
                                ctx.seed.child(8), timing);
    const double loss = score_error_loss_structural(oracle, ctx.grid);
    const BoundReport bound = theorem_bound(loss, ctx.grid, ctx.target.dim());
    ctx.add(ctx.row("girsanov_rhs", g.estimate.value, g.estimate.std_err, bound.total, g.estimate.value / bound.total));
    ctx.add(ctx.row("quadrature_refinement_change", g.refinement_change));
    ctx.add(ctx.row("score_error_loss", loss));
    if (!oracle.descriptor.perturbation && timing == OracleTiming::frozen) {
        const double kappa = ctx.grid.kappa();
        const double d = static_cast<double>(ctx.target.dim());
        const double reference = kappa * kappa * d * static_cast<double>(ctx.grid.steps()) + kappa * d * ctx.grid.horizon();
        ctx.add(ctx.row("discretization_error", g.estimate.value, g.estimate.std_err, reference,
                        g.estimate.value / reference));
    }
    if (oracle.is_affine() && ctx.target.is_single_component()) {
        const double kl_q = chain_kl(ctx.target, oracle, ctx.grid, SamplerInit::exact_q_T);
        const double limit = g.estimate.value + 3.0 * g.estimate.std_err;
        ResultRow r = ctx.row("kl_q_start", kl_q, 0.0, limit, kl_q / limit);
        r.passed = kl_q <= limit;
        ctx.add(r);
    }
    maybe_dump_samples(ctx, oracle);
}

void dispatch(RunContext& ctx, Command command) {
    switch (command) {
        case Command::verify_identities: run_identities(ctx); return;
        case Command::verify_localization: run_localization(ctx); return;
        case Command::kl_exact: run_kl_exact(ctx); return;
        case Command::girsanov: run_girsanov(ctx); return;
        case Command::sweep: throw std::logic_error("nested sweep");
    }
}

const char* table_of(Command command) {
    switch (command) {
        case Command::verify_identities: return "[suite] times/method";
        case Command::verify_localization: return "[suite] s_points";
        case Command::kl_exact: return "[target]/[grid]";
        case Command::girsanov: return "[grid]/[suite] quad_points";
        case Command::sweep: return "[sweep]";
    }
    return "?";
}

void run_single(const ExperimentConfig& cfg, Command command, Seed seed, RunRecord& record, bool write_reports,
                const std::string& axis, double axis_value) {
    RunContext ctx{cfg, cfg.target.build(), cfg.grid.build(), seed, record, write_reports};
    const auto first = record.results.size();
    try {
        dispatch(ctx, command);
    } catch (const std::invalid_argument& e) {
        throw RunError(std::string(to_string(command)) + " (" + table_of(command) + "): " + e.what());
    }
    for (auto i = first; i < record.results.size(); ++i) {
        record.results[i].axis = axis;
        record.results[i].axis_value = axis_value;
    }
    if (record.grid_hash.empty()) record.grid_hash = ctx.grid.hash();
}

void add_sweep_summary(const ExperimentConfig& cfg, RunRecord& record) {
    const auto& sweep = *cfg.sweep;
    auto series = [&](const std::string& quantity) {
        std::vector<std::pair<double, double>> out;
        for (const auto& r : record.results) {
            if (r.quantity == quantity && !r.axis.empty()) out.emplace_back(r.axis_value, r.value);
        }
        return out;
    };
    auto summary = [&](const std::string& quantity, double value) {
        ResultRow r;
        r.axis = "summary";
        r.quantity = quantity;
        r.value = value;
        r.bound = kNaN;
        r.ratio = kNaN;
        r.n_paths = cfg.n_paths;
        r.seed = cfg.seed;
        r.grid_hash = record.grid_hash;
        record.results.push_back(r);
    };
    auto slope_of = [&](const std::vector<std::pair<double, double>>& points) {
        std::vector<double> x, y;
        for (const auto& [a, b] : points) {
            if (a > 0.0 && b > 0.0) {
                x.push_back(a);
                y.push_back(b);
            }
        }
        return x.size() >= 2 ? loglog_slope(x, y) : kNaN;
    };
    if (sweep.axis == SweepAxis::dim) {
        const auto kl = series("kl_pi_start");
        if (!kl.empty()) {
            const double per_dim = kl.front().second / kl.front().first;
            double worst = 0.0;
            for (const auto& [d, v] : kl) worst = std::max(worst, std::abs(v / (d * per_dim) - 1.0));
            summary("kl_pi_start_max_rel_dev_from_linear", worst);
        }
    }
    if (sweep.axis == SweepAxis::steps) {
        const auto disc = series("discretization_error");
        if (!disc.empty()) summary("discretization_error_loglog_slope", slope_of(disc));
        const auto kl = series("kl_pi_start");
        if (!kl.empty()) summary("kl_pi_start_loglog_slope", slope_of(kl));
    }
    if (sweep.axis == SweepAxis::epsilon) {
        const auto kl = series("kl_pi_start");
        double baseline = kNaN;
        for (const auto& [eps, v] : kl) {
            if (eps == 0.0) baseline = v;
        }
        if (!std::isnan(baseline)) {
            std::vector<std::pair<double, double>> inflation;
            for (const auto& [eps, v] : kl) {
                if (eps > 0.0) inflation.emplace_back(eps, v - baseline);
            }
            summary("kl_inflation_loglog_slope", slope_of(inflation));
        }
    }
}

void format_cell(std::ostream& os, double v) {
    if (!std::isnan(v)) os << v;
}

}  // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

RunRecord execute(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    set_worker_count(cfg.workers);
    RunRecord record;
    record.config_echo = cfg.echo();
    const Seed master{cfg.seed};
    if (cfg.command != Command::sweep) {
        run_single(cfg, cfg.command, master, record, true, "", kNaN);
    } else {
        const auto& sweep = *cfg.sweep;
        for (double v : sweep.values) {
            ExperimentConfig point = cfg;
            switch (sweep.axis) {
                case SweepAxis::dim: point.target.copies = static_cast<std::size_t>(v); break;
                case SweepAxis::steps: point.grid.steps = static_cast<std::size_t>(v); break;
                case SweepAxis::early_stop: point.grid.early_stop = v; break;
                case SweepAxis::epsilon: {
                    PerturbationSpec p = cfg.perturbation.value_or(PerturbationSpec{});
                    if (!cfg.perturbation) p.direction_seed = master;
                    p.epsilon = v;
                    point.perturbation = p;
                    break;
                }
            }
            const Seed point_seed = master.child(std::bit_cast<std::uint64_t>(v));
            run_single(point, sweep.base, point_seed, record, false, to_string(sweep.axis), v);
        }
        add_sweep_summary(cfg, record);
    }
    {
        std::ostringstream os;
        write_results_csv(os, record.results);
        record.artifacts["results.csv"] = os.str();
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
    RunRecord record = execute(cfg);
    {
        std::ostringstream os;
        write_run_record_json(os, record);
        record.artifacts["run_record.json"] = os.str();
    }
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    std::vector<fs::path> temps;
    try {
        for (const auto& [name, contents] : record.artifacts) {
            const fs::path tmp = dir / (name + ".tmp");
            temps.push_back(tmp);
            std::ofstream out(tmp, std::ios::binary);
            out << contents;
            out.close();
            if (!out) throw std::runtime_error("cannot write " + tmp.string());
        }
        for (const auto& [name, contents] : record.artifacts) fs::rename(dir / (name + ".tmp"), dir / name);
    } catch (...) {
        std::error_code ec;
        for (const auto& t : temps) fs::remove(t, ec);
        throw;
    }
    return record;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    const auto old_precision = out.precision(17);
    out << "axis,axis_value,quantity,value,std_err,bound,ratio,n_paths,seed,grid_hash\n";
    for (const auto& r : rows) {
        out << r.axis << ',';
        if (!r.axis.empty() && r.axis != "summary") out << r.axis_value;
        out << ',' << r.quantity << ',';
        format_cell(out, r.value);
        out << ',';
        format_cell(out, r.std_err);
        out << ',';
        format_cell(out, r.bound);
        out << ',';
        format_cell(out, r.ratio);
        out << ',' << r.n_paths << ',' << r.seed << ',' << r.grid_hash << '\n';
    }
    out.precision(old_precision);
}

void write_run_record_json(std::ostream& out, const RunRecord& record) {
    nlohmann::ordered_json j;
    j["version"] = record.version;
    j["config"] = record.config_echo;
    j["wall_seconds"] = record.wall_seconds;
    j["grid_hash"] = record.grid_hash;
    j["passed"] = record.passed;
    auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json results = nlohmann::ordered_json::array();
    for (const auto& r : record.results) {
        nlohmann::ordered_json item;
        if (!r.axis.empty()) {
            item["axis"] = r.axis;
            item["axis_value"] = finite_or_null(r.axis_value);
        }
        item["quantity"] = r.quantity;
        item["value"] = finite_or_null(r.value);
        item["std_err"] = finite_or_null(r.std_err);
        item["bound"] = finite_or_null(r.bound);
        item["ratio"] = finite_or_null(r.ratio);
        item["n_paths"] = r.n_paths;
        item["seed"] = r.seed;
        item["grid_hash"] = r.grid_hash;
        item["passed"] = r.passed;
        results.push_back(item);
    }
    j["results"] = results;
    std::vector<std::string> files;
    for (const auto& [name, contents] : record.artifacts) files.push_back(name);
    j["artifacts"] = files;
    out << j.dump(2) << '\n';
}

}  // namespace diffkl
