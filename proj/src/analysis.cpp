#include "diffkl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffkl/parallel.hpp"
#include "diffkl/quadrature.hpp"

namespace diffkl {

GaussianLaw::GaussianLaw(Vector mean_in, Matrix cov_in) : mean(std::move(mean_in)), cov(std::move(cov_in)) {
    const auto d = mean.size();
    if (cov.rows() != d || cov.cols() != d) throw std::invalid_argument("GaussianLaw: dimension mismatch");
    if (!mean.allFinite() || !cov.allFinite()) throw std::invalid_argument("GaussianLaw: non-finite entries");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("GaussianLaw: covariance is not symmetric");
    }
    cov = symmetrized(cov);
}

GaussianLaw GaussianLaw::standard(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return GaussianLaw(Vector::Zero(d), Matrix::Identity(d, d));
}

GaussianLaw marginal_law(const Target& target, double t) {
    if (!target.is_single_component()) throw std::invalid_argument("marginal_law: needs a Gaussian or point-mass target");
    if (!(t > 0.0)) throw std::invalid_argument("marginal_law: t must be positive");
    const auto& c = target.components().front();
    const auto d = static_cast<Eigen::Index>(c.dim());
    const double decay_sq = std::exp(-2.0 * t);
    // I + e^{-2t}(C - I) keeps the stationary case exactly at I
    Matrix cov = Matrix::Identity(d, d) + decay_sq * (c.cov - Matrix::Identity(d, d));
    return GaussianLaw(std::exp(-t) * c.mean, cov);
}

GaussianLaw propagate_affine_chain(const ScoreOracle& oracle, const TimeGrid& grid, const GaussianLaw& init) {
    if (!oracle.is_affine()) throw std::invalid_argument("propagate_affine_chain: oracle is not affine");
    if (init.dim() != oracle.dim) throw std::invalid_argument("propagate_affine_chain: dimension mismatch");
    const auto d = static_cast<Eigen::Index>(oracle.dim);
    Vector mean = init.mean;
    Matrix cov = init.cov;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double gamma = grid.gammas()[k];
        const AffineForm form = oracle.affine(grid.forward_time(k));
        const double growth = std::exp(gamma);
        const double drift = 2.0 * std::expm1(gamma);
        const Matrix m = growth * Matrix::Identity(d, d) + drift * form.slope;
        mean = growth * mean + drift * (form.slope * mean + form.offset);
        cov = m * cov * m.transpose();
        cov.diagonal().array() += std::expm1(2.0 * gamma);
        cov = symmetrized(cov);
    }
    return GaussianLaw(mean, cov);
}

namespace {

// x - log(1 + x), accurate near 0.
double x_minus_log1p(double x) {
    if (std::abs(x) < 1e-3) {
        double term = x * x;
        double sum = 0.0;
        for (int n = 2; n < 12; ++n) {
            sum += (n % 2 == 0 ? 1.0 : -1.0) * term / n;
            term *= x;
        }
        return sum;
    }
    return x - std::log1p(x);
}

}  // namespace

double kl_gaussian(const GaussianLaw& p, const GaussianLaw& q) {
    if (p.dim() != q.dim()) throw std::invalid_argument("kl_gaussian: dimension mismatch");
    Eigen::LLT<Matrix> llt(q.cov);
    if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)) {
        throw std::invalid_argument("kl_gaussian: reference covariance is not positive definite");
    }
    // Eigenvalues of L^{-1} (P - Q) L^{-T} give trace and log-det terms without cancellation.
    Matrix diff = p.cov - q.cov;
    const Matrix half = llt.matrixL().solve(diff);
    const Matrix whitened = llt.matrixL().solve(Matrix(half.transpose()));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(whitened), Eigen::EigenvaluesOnly);
    double total = 0.0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double x = eig.eigenvalues()[i];
        if (!(x > -1.0)) throw std::invalid_argument("kl_gaussian: covariance is not positive definite");
        total += x_minus_log1p(x);
    }
    const Vector shift = llt.matrixL().solve(q.mean - p.mean);
    total += shift.squaredNorm();
    return std::max(0.0, 0.5 * total);
}

ForwardKL forward_kl(const Target& target, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("forward_kl: T must be positive");
    const auto d = static_cast<double>(target.dim());
    ForwardKL out;
    out.exact = kl_gaussian(marginal_law(target, horizon), GaussianLaw::standard(target.dim()));
    const double var = sigma_sq(horizon);
    const double decay_sq = std::exp(-2.0 * horizon);
    out.convexity_bound = 0.5 * (-d * std::log(var) - d + d * var + decay_sq * target.second_moment());
    out.bound = 2.0 * out.convexity_bound;
    out.bound_valid = horizon >= 1.0;
    return out;
}

namespace {

// Evaluates x -> A x + b at a fixed set of times when possible, else falls back to the callable.
class TimeIndexedField {
public:
    TimeIndexedField(const std::vector<double>& times, const std::function<AffineForm(double)>& affine,
                     std::function<Vector(const Vector&, double)> fallback)
        : times_(times), fallback_(std::move(fallback)) {
        if (affine) {
            forms_.reserve(times.size());
            for (double t : times) forms_.push_back(affine(t));
        }
    }

    Vector operator()(std::size_t index, const Vector& x) const {
        if (!forms_.empty()) return forms_[index].slope * x + forms_[index].offset;
        return fallback_(x, times_[index]);
    }

private:
    std::vector<double> times_;
    std::vector<AffineForm> forms_;
    std::function<Vector(const Vector&, double)> fallback_;
};

}  // namespace

GirsanovEstimate girsanov_rhs(const Target& target, const ScoreOracle& oracle, const TimeGrid& grid,
                              std::size_t n_paths, std::size_t quad_points, Seed seed, OracleTiming timing) {
    if (quad_points < 1) throw std::invalid_argument("girsanov_rhs: need at least one quadrature point per interval");
    if (n_paths < 2) throw std::invalid_argument("girsanov_rhs: need at least two paths");
    if (oracle.dim != target.dim()) throw std::invalid_argument("girsanov_rhs: oracle and target dimensions differ");
    const std::size_t n_steps = grid.steps();
    const auto& r = grid.residuals();
    const auto& gammas = grid.gammas();
    const ScoreOracle truth = exact_oracle(target);

    // Forward times: grid points 0..N, then N*m midpoint nodes.
    auto node_times = [&](std::size_t k, std::size_t m) {
        std::vector<double> nodes(m);
        for (std::size_t j = 0; j < m; ++j) {
            nodes[j] = r[k] - (static_cast<double>(j) + 0.5) * gammas[k] / static_cast<double>(m);
        }
        return nodes;
    };
    std::vector<double> times(r.begin(), r.end());
    for (std::size_t k = 0; k < n_steps; ++k) {
        const auto nodes = node_times(k, quad_points);
        times.insert(times.end(), nodes.begin(), nodes.end());
    }
    const auto order = ascending_order(times);
    const TimeIndexedField true_score(times, truth.affine, truth.evaluate);
    const TimeIndexedField approx(times, oracle.affine, oracle.evaluate);

    std::vector<double> per_path(n_paths);
    parallel_for(n_paths, [&](std::size_t p) {
        Stream stream = substream(seed.child(0), p);
        const Matrix path = sample_forward_times(target, times, order, stream);
        double total = 0.0;
        for (std::size_t k = 0; k < n_steps; ++k) {
            Vector frozen;
            if (timing == OracleTiming::frozen) frozen = approx(k, path.col(static_cast<Eigen::Index>(k)));
            double interval = 0.0;
            for (std::size_t j = 0; j < quad_points; ++j) {
                const std::size_t idx = n_steps + 1 + k * quad_points + j;
                const Vector y = path.col(static_cast<Eigen::Index>(idx));
                const Vector s = timing == OracleTiming::frozen ? frozen : approx(idx, y);
                interval += (true_score(idx, y) - s).squaredNorm();
            }
            total += gammas[k] * interval / static_cast<double>(quad_points);
        }
        per_path[p] = total;
    });

    GirsanovEstimate out;
    out.estimate = mean_estimate(per_path);
    out.n_paths = n_paths;
    out.quad_points = quad_points;

    // Doubling check on the last interval, where the integrand varies fastest.
    const std::size_t k = n_steps - 1;
    const auto coarse = node_times(k, quad_points);
    const auto fine = node_times(k, 2 * quad_points);
    std::vector<double> check_times{r[k]};
    check_times.insert(check_times.end(), coarse.begin(), coarse.end());
    check_times.insert(check_times.end(), fine.begin(), fine.end());
    const auto check_order = ascending_order(check_times);
    const std::size_t n_check = std::min<std::size_t>(n_paths, 2000);
    std::vector<double> coarse_sum(n_check), fine_sum(n_check);
    parallel_for(n_check, [&](std::size_t p) {
        Stream stream = substream(seed.child(1), p);
        const Matrix path = sample_forward_times(target, check_times, check_order, stream);
        const Vector frozen = oracle(path.col(0), r[k]);
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < check_times.size() - 1; ++j) {
            const double tau = check_times[j + 1];
            const Vector y = path.col(static_cast<Eigen::Index>(j + 1));
            const Vector s = timing == OracleTiming::frozen ? frozen : oracle(y, tau);
            const double value = (truth(y, tau) - s).squaredNorm();
            (j < quad_points ? a : b) += value;
        }
        coarse_sum[p] = gammas[k] * a / static_cast<double>(quad_points);
        fine_sum[p] = gammas[k] * b / static_cast<double>(2 * quad_points);
    });
    const double coarse_mean = mean_estimate(coarse_sum).value;
    const double fine_mean = mean_estimate(fine_sum).value;
    out.refinement_change = fine_mean == 0.0 ? std::abs(coarse_mean) : std::abs(fine_mean - coarse_mean) / std::abs(fine_mean);
    return out;
}

DiscretizationReport discretization_error(const Target& target, const TimeGrid& grid, std::size_t n_paths,
                                          std::size_t quad_points, Seed seed) {
    DiscretizationReport out;
    out.estimate = girsanov_rhs(target, exact_oracle(target), grid, n_paths, quad_points, seed, OracleTiming::frozen);
    const double kappa = grid.kappa();
    const double d = static_cast<double>(target.dim());
    out.reference = kappa * kappa * d * static_cast<double>(grid.steps()) + kappa * d * grid.horizon();
    out.ratio = out.estimate.estimate.value / out.reference;
    return out;
}

std::vector<ReportRow> expectation_identities(const Target& target, double t, ExpectationMethod method,
                                              std::size_t budget, Seed seed) {
    if (!(t > 0.0)) throw std::invalid_argument("expectation_identities: t must be positive");
    const double d = static_cast<double>(target.dim());
    const double var = sigma_sq(t);
    const double sigma = std::sqrt(var);
    const double sdot = sigma_dot(t);
    auto score_rhs = [&](double trace) { return d / var - sdot / (var * sigma) * trace; };
    auto frob_rhs = [&](double trace, double trace_sq) {
        return d / (var * var) - 2.0 * sdot / (var * var * sigma) * trace + sdot * sdot / (var * var * var) * trace_sq;
    };
    std::vector<ReportRow> rows;
    switch (method) {
        case ExpectationMethod::closed_form: {
            if (!target.is_single_component()) {
                throw std::invalid_argument("expectation_identities: closed form needs a single-component target");
            }
            // The density-route Hessian -S^{-1} is constant in x, so both lhs expectations are exact.
            const Vector centre = std::exp(-t) * target.components().front().mean;
            const Matrix h = hessian_from_density(target, centre, t);
            const double trace = expected_trace_sigma(target, t, method).value;
            const double trace_sq = expected_trace_sigma_sq(target, t, method).value;
            rows.push_back(make_row(t, "score_norm", -h.trace(), score_rhs(trace), 0.0));
            rows.push_back(make_row(t, "hessian_frobenius", h.squaredNorm(), frob_rhs(trace, trace_sq), 0.0));
            break;
        }
        case ExpectationMethod::quadrature: {
            if (target.dim() != 1) throw std::invalid_argument("expectation_identities: quadrature needs d = 1");
            auto point = [](double x) { return Vector::Constant(1, x); };
            const double score_lhs =
                integrate_marginal(target, t, [&](double x) { return score_from_density(target, point(x), t).squaredNorm(); });
            const double frob_lhs = integrate_marginal(
                target, t, [&](double x) { return hessian_from_density(target, point(x), t).squaredNorm(); });
            const double trace = expected_trace_sigma(target, t, method).value;
            const double trace_sq = expected_trace_sigma_sq(target, t, method).value;
            rows.push_back(make_row(t, "score_norm", score_lhs, score_rhs(trace), 0.0));
            rows.push_back(make_row(t, "hessian_frobenius", frob_lhs, frob_rhs(trace, trace_sq), 0.0));
            break;
        }
        case ExpectationMethod::monte_carlo: {
            if (budget < 2) throw std::invalid_argument("expectation_identities: need budget >= 2");
            std::vector<double> s_lhs(budget), s_rhs(budget), s_diff(budget);
            std::vector<double> f_lhs(budget), f_rhs(budget), f_diff(budget);
            parallel_for(budget, [&](std::size_t i) {
                Stream stream = substream(seed, i);
                const Vector x = draw_noisy(target, t, stream);
                const auto pm = posterior_moments(target, x, t);
                const double trace = pm.sigma.trace();
                const double trace_sq = pm.sigma.squaredNorm();
                s_lhs[i] = score_from_density(target, x, t).squaredNorm();
                s_rhs[i] = score_rhs(trace);
                s_diff[i] = s_lhs[i] - s_rhs[i];
                f_lhs[i] = hessian_from_density(target, x, t).squaredNorm();
                f_rhs[i] = frob_rhs(trace, trace_sq);
                f_diff[i] = f_lhs[i] - f_rhs[i];
            });
            rows.push_back(make_row(t, "score_norm", mean_estimate(s_lhs).value, mean_estimate(s_rhs).value,
                                    mean_estimate(s_diff).std_err));
            // the rhs cancels terms of size d sigma^{-4}
            rows.push_back(make_row(t, "hessian_frobenius", mean_estimate(f_lhs).value, mean_estimate(f_rhs).value,
                                    mean_estimate(f_diff).std_err, d / (var * var)));
            break;
        }
    }
    return rows;
}

BoundReport theorem_bound(double eps_sq, double kappa, std::size_t n_steps, double horizon, std::size_t dim) {
    if (!(eps_sq >= 0.0) || !(kappa >= 0.0) || !(horizon >= 0.0)) {
        throw std::invalid_argument("theorem_bound: inputs must be nonnegative");
    }
    const double d = static_cast<double>(dim);
    BoundReport out;
    out.score_term = eps_sq;
    out.disc_quadratic = kappa * kappa * d * static_cast<double>(n_steps);
    out.disc_linear = kappa * d * horizon;
    out.forward_term = d * std::exp(-2.0 * horizon);
    if (dim == 0) out.forward_term = 0.0;
    out.total = out.score_term + out.disc_quadratic + out.disc_linear + out.forward_term;
    return out;
}

BoundReport theorem_bound(double eps_sq, const TimeGrid& grid, std::size_t dim) {
    return theorem_bound(eps_sq, grid.kappa(), grid.steps(), grid.horizon(), dim);
}

double chain_kl(const Target& target, const ScoreOracle& oracle, const TimeGrid& grid, SamplerInit init) {
    const GaussianLaw start = init == SamplerInit::exact_q_T ? marginal_law(target, grid.horizon())
                                                              : GaussianLaw::standard(target.dim());
    const GaussianLaw output = propagate_affine_chain(oracle, grid, start);
    return kl_gaussian(marginal_law(target, grid.early_stop()), output);
}

DecompositionReport kl_decomposition_check(const Target& target, const ScoreOracle& oracle, const TimeGrid& grid,
                                           double tolerance) {
    if (!oracle.is_affine()) throw std::invalid_argument("kl_decomposition_check: oracle is not affine");
    DecompositionReport out;
    out.kl_q_start = chain_kl(target, oracle, grid, SamplerInit::exact_q_T);
    out.kl_pi_start = chain_kl(target, oracle, grid, SamplerInit::standard_gaussian);
    out.forward_term = forward_kl(target, grid.horizon()).exact;
    out.slack = out.kl_q_start + out.forward_term - out.kl_pi_start;
    out.holds = out.slack >= -tolerance;
    return out;
}

}  // namespace diffkl
