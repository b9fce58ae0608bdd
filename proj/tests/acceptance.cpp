// Acceptance criteria 1-10: one PASS/FAIL line each, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "diffkl/analysis.hpp"
#include "diffkl/experiment.hpp"
#include "diffkl/localization.hpp"
#include "diffkl/sampler.hpp"
#include "diffkl/schedule.hpp"
#include "diffkl/targets.hpp"

using namespace diffkl;

namespace {

struct Outcome {
    bool passed = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (passed) detail << "first failure: " << what << "; ";
            passed = false;
        }
    }
};

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

Matrix random_spd(std::size_t d, Stream& stream) {
    Matrix a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = stream.normal();
    return symmetrized(a * a.transpose() / static_cast<double>(d) + 0.2 * Matrix::Identity(a.rows(), a.cols()));
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    return out;
}

Target correlated_gaussian() {
    Matrix c(2, 2);
    c << 1.5, 0.4, 0.4, 0.6;
    return Target::gaussian(vec({0.5, -1.0}), c);
}

Target gaussian_mixture() {
    Matrix c1(2, 2), c2(2, 2);
    c1 << 0.3, 0.1, 0.1, 0.2;
    c2 << 0.5, -0.2, -0.2, 0.4;
    return Target({0.4, 0.6}, {GaussianComponent(vec({1.0, -0.5}), c1), GaussianComponent(vec({-0.7, 0.9}), c2)});
}

Target two_point(double w_minus = 0.5) { return Target::atoms({w_minus, 1.0 - w_minus}, vec({-1.0, 1.0}).transpose()); }

void identity_suite(Outcome& o) {
    const auto times = log_grid(1e-3, 5.0, 20);
    double worst_rel = 0.0, worst_z = 0.0;
    for (double t : times) {
        for (const auto& target : {correlated_gaussian(), Target::point_mass(vec({1.0, -2.0, 0.5}))}) {
            for (const auto& r : expectation_identities(target, t, ExpectationMethod::closed_form)) {
                const double rel = r.abs_diff() / std::max(1e-300, std::abs(r.rhs));
                worst_rel = std::max(worst_rel, rel);
                o.require(rel <= 1e-10, r.quantity + " closed form at t=" + num(t));
            }
        }
        for (const auto& target : {gaussian_mixture(), two_point()}) {
            for (const auto& r : expectation_identities(target, t, ExpectationMethod::monte_carlo, 100000, Seed{1000}.child(
                                                            static_cast<std::uint64_t>(target.dim())))) {
                worst_z = std::max(worst_z, std::abs(r.z_score));
                o.require(std::abs(r.z_score) <= 3.0, r.quantity + " mixture at t=" + num(t) + " z=" + num(r.z_score));
            }
        }
    }
    o.detail << "20 times; closed-form max rel diff " << num(worst_rel) << ", mixture max |z| " << num(worst_z);
}

void covariance_ode(Outcome& o) {
    const std::vector<double> times{0.01, 0.1, 0.5, 1.0, 2.0, 4.0};
    double worst_closed = 0.0, worst_quad = 0.0;
    Matrix c(3, 3);
    c << 2.0, 0.3, 0.1, 0.3, 0.7, -0.2, 0.1, -0.2, 1.1;
    for (const auto& target : {Target::gaussian(vec({1.0, 0.0, -1.0}), c), Target::standard_gaussian(2)}) {
        for (const auto& r : check_covariance_ode(target, times, 0.0, ExpectationMethod::closed_form)) {
            worst_closed = std::max(worst_closed, r.abs_diff());
            o.require(r.abs_diff() <= 1e-10, "closed form " + r.quantity + " at t=" + num(r.time));
        }
    }
    for (const auto& r : check_covariance_ode(two_point(), times, 1e-4, ExpectationMethod::quadrature)) {
        worst_quad = std::max(worst_quad, r.abs_diff());
        o.require(r.abs_diff() <= 1e-4, "two-point quadrature " + r.quantity + " at t=" + num(r.time));
    }
    o.detail << "Gaussian max |lhs-rhs| " << num(worst_closed) << ", two-point max " << num(worst_quad);
}

void localization_equivalence(Outcome& o) {
    double worst = 0.0;
    std::size_t rows = 0;
    for (const auto& target : {correlated_gaussian(), Target::point_mass(vec({1.0, -2.0}))}) {
        for (const auto& r : check_localization_equivalence(target, {0.5, 1.0, 4.0}, 100000, Seed{3000})) {
            ++rows;
            worst = std::max(worst, std::abs(r.z_score));
            o.require(std::abs(r.z_score) <= 4.0, r.quantity + " at s=" + num(r.time));
        }
    }
    o.detail << rows << " rows, max |z| " << num(worst);
}

void martingale(Outcome& o) {
    double worst = 0.0;
    const auto three = Target::atoms({0.2, 0.5, 0.3}, (Matrix(2, 3) << 1, -1, 0, 0, 2, -2).finished());
    for (const auto& target : {two_point(0.3), three}) {
        for (const auto& r : check_density_martingale(target, {1.0, 2.0}, 100000, Seed{4000})) {
            worst = std::max(worst, std::abs(r.z_score));
            o.require(std::abs(r.z_score) <= 3.0, r.quantity + " at s=" + num(r.time));
        }
    }
    o.detail << "max |z| " << num(worst);
}

void girsanov_inequality(Outcome& o) {
    struct Case {
        Target target;
        TimeGrid grid;
        std::optional<PerturbationSpec> perturbation;
    };
    Matrix c3(3, 3);
    c3 << 1.2, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 2.0;
    const std::vector<Case> cases{
        {correlated_gaussian(), make_two_phase_grid(16, 3.0, 0.01), std::nullopt},
        {correlated_gaussian(), make_uniform_grid(12, 2.0, 0.05), std::nullopt},
        {Target::standard_gaussian(3), make_two_phase_grid(32, 4.0, 0.01), std::nullopt},
        {correlated_gaussian(), make_two_phase_grid(16, 3.0, 0.01),
         PerturbationSpec{PerturbationMode::constant_bias, 0.3, Seed{1}}},
        {Target::gaussian(vec({1.0, 0.0, -1.0}), c3), make_two_phase_grid(24, 4.0, 0.005),
         PerturbationSpec{PerturbationMode::per_step_bias, 0.5, Seed{2}}},
        {Target::point_mass(vec({0.5, 1.5})), make_two_phase_grid(32, 5.0, 0.01),
         PerturbationSpec{PerturbationMode::constant_bias, 0.1, Seed{3}}},
    };
    double min_slack = INFINITY;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& cs = cases[i];
        ScoreOracle oracle = exact_oracle(cs.target);
        if (cs.perturbation) oracle = perturb_oracle(oracle, *cs.perturbation, cs.grid);
        const double kl = chain_kl(cs.target, oracle, cs.grid, SamplerInit::exact_q_T);
        const auto g = girsanov_rhs(cs.target, oracle, cs.grid, 4000, 8, Seed{5000}.child(i));
        const double slack = g.estimate.value + 3 * g.estimate.std_err - kl;
        min_slack = std::min(min_slack, slack / std::max(kl, 1e-300));
        o.require(slack >= 0.0, "case " + std::to_string(i) + " kl=" + num(kl) + " rhs=" + num(g.estimate.value));
    }
    o.detail << "6 cases, min relative slack " << num(min_slack);
}

void forward_convergence(Outcome& o) {
    Stream stream(Seed{6000});
    for (int r = 0; r < 10; ++r) {
        const std::size_t d = 1 + static_cast<std::size_t>(r) % 5;
        Vector mu(static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = stream.normal();
        const auto target = Target::gaussian(mu, random_spd(d, stream));
        for (double T : {1.0, 2.0, 4.0}) {
            const auto f = forward_kl(target, T);
            o.require(f.exact <= f.convexity_bound && f.exact <= f.bound, "random target " + std::to_string(r) + " T=" + num(T));
        }
    }
    double worst = 0.0;
    for (std::size_t d : {1, 4, 16}) {
        for (double T : {1.0, 2.0, 4.0}) {
            const auto f = forward_kl(Target::standard_gaussian(d), T);
            const double independent = -static_cast<double>(d) * std::log(1.0 - std::exp(-2.0 * T));
            worst = std::max(worst, std::abs(f.bound - independent) / independent);
            o.require(f.exact == 0.0, "identity exact KL nonzero");
            o.require(std::abs(f.bound - independent) <= 1e-12 * independent, "identity bound mismatch");
        }
    }
    o.detail << "30 random checks; identity case bound rel err " << num(worst);
}

void dimension_linearity(Outcome& o) {
    Matrix c(2, 2);
    c << 0.8, 0.2, 0.2, 1.3;
    const auto factor = Target::gaussian(vec({0.3, -0.4}), c);
    const auto grid = make_two_phase_grid(32, 5.0, 0.01);
    const double one = chain_kl(factor, exact_oracle(factor), grid, SamplerInit::standard_gaussian);
    double worst = 0.0;
    for (std::size_t m : {1, 2, 4, 8, 16, 32}) {
        const auto prod = Target::product(factor, m);
        const double kl = chain_kl(prod, exact_oracle(prod), grid, SamplerInit::standard_gaussian);
        const double rel = std::abs(kl - m * one) / (m * one);
        worst = std::max(worst, rel);
        o.require(rel <= 1e-10, "copies=" + std::to_string(m));
    }
    o.detail << "product of 2-d Gaussians, copies 1..32, max rel dev " << num(worst);
}

const std::vector<std::size_t> kScalingSteps{32, 64, 128, 256, 512};

void step_count_scaling(Outcome& o) {
    const auto target = Target::point_mass(vec({0.5, -0.5}));
    std::vector<DiscretizationReport> reports;
    for (std::size_t i = 0; i < kScalingSteps.size(); ++i) {
        reports.push_back(discretization_error(target, make_two_phase_grid(kScalingSteps[i], 5.0, 1e-3), 10000, 8,
                                               Seed{8000}.child(i)));
    }
    const double fitted = reports.front().ratio;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const double rel = reports[i].ratio / fitted;
        o.require(rel >= 0.1 && rel <= 10.0, "ratio band at N=" + std::to_string(kScalingSteps[i]));
        if (i > 0) {
            const auto& a = reports[i - 1].estimate.estimate;
            const auto& b = reports[i].estimate.estimate;
            o.require(b.value <= a.value + 3 * std::hypot(a.std_err, b.std_err),
                      "monotone at N=" + std::to_string(kScalingSteps[i]));
        }
    }
    o.detail << "ratios";
    for (const auto& r : reports) o.detail << ' ' << num(r.ratio);
    o.detail << " (fitted at N=32: " << num(fitted) << ")";
}

void score_error_budget(Outcome& o) {
    Matrix c(2, 2);
    c << 1.5, 0.4, 0.4, 0.6;
    const auto target = Target::gaussian(Vector::Zero(2), c);
    const auto grid = make_two_phase_grid(64, 5.0, 0.01);
    const auto exact = exact_oracle(target);
    const double base = chain_kl(target, exact, grid, SamplerInit::standard_gaussian);
    const std::vector<double> eps{0.01, 0.02, 0.05, 0.1, 0.2, 0.3};
    std::vector<double> inflation;
    double worst_loss = 0.0;
    for (double e : eps) {
        const auto o_eps = perturb_oracle(exact, {PerturbationMode::constant_bias, e, Seed{9000}}, grid);
        const double loss = score_error_loss_structural(o_eps, grid);
        const auto mc = score_error_loss(o_eps, grid, 1000, Seed{9001});
        worst_loss = std::max({worst_loss, std::abs(loss - e * e) / (e * e), std::abs(mc.value - e * e) / (e * e)});
        o.require(std::abs(loss - e * e) <= 1e-12 * e * e, "loss at eps=" + num(e));
        o.require(std::abs(mc.value - e * e) <= 1e-12 * e * e, "sampled loss at eps=" + num(e));
        inflation.push_back(chain_kl(target, o_eps, grid, SamplerInit::standard_gaussian) - base);
    }
    const double slope = loglog_slope(eps, inflation);
    o.require(slope >= 1.8 && slope <= 2.2, "slope " + num(slope));
    o.detail << "loss max rel err " << num(worst_loss) << ", KL inflation log-log slope " << num(slope);
}

void schedule_property(Outcome& o) {
    double lo = INFINITY, hi = 0.0;
    for (std::size_t n : kScalingSteps) {
        const auto g = make_two_phase_grid(n, 5.0, 1e-3);
        for (std::size_t k = 0; k < g.steps(); ++k) {
            o.require(g.gammas()[k] <= g.kappa() * std::min(1.0, g.residuals()[k + 1]),
                      "step bound at N=" + std::to_string(n) + " k=" + std::to_string(k));
        }
        const double scaled = g.kappa() * static_cast<double>(n) / (5.0 + std::log(1e3));
        lo = std::min(lo, scaled);
        hi = std::max(hi, scaled);
        o.require(scaled >= 0.4 && scaled <= 2.6, "scaled kappa at N=" + std::to_string(n));
    }
    o.detail << "kappa N/(T+log(1/delta)) in [" << num(lo) << ", " << num(hi) << "]";
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_seconds;  // 0: no runtime limit
        std::function<void(Outcome&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "identity suite", 60.0, identity_suite},
        {2, "covariance ODE", 30.0, covariance_ode},
        {3, "localization equivalence", 30.0, localization_equivalence},
        {4, "density martingale", 0.0, martingale},
        {5, "Girsanov inequality", 120.0, girsanov_inequality},
        {6, "forward convergence", 0.0, forward_convergence},
        {7, "dimension linearity", 10.0, dimension_linearity},
        {8, "step-count scaling", 300.0, step_count_scaling},
        {9, "score-error budget", 0.0, score_error_budget},
        {10, "two-phase schedule", 0.0, schedule_property},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.passed = false;
            o.detail << "exception: " << e.what();
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_seconds > 0.0 && seconds > c.limit_seconds) {
            o.passed = false;
            o.detail << "; runtime limit " << c.limit_seconds << " s exceeded";
        }
        if (!o.passed) ++failures;
        std::printf("[%s] %d %s: %s (%.1f s)\n", o.passed ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str(), seconds);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
