#include "diffkl/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "diffkl/parallel.hpp"
#include "diffkl/quadrature.hpp"
#include "diffkl/schedule.hpp"

namespace diffkl {

GaussianComponent::GaussianComponent(Vector mean_in, Matrix cov_in) : mean(std::move(mean_in)), cov(std::move(cov_in)) {
    const auto d = mean.size();
    if (d == 0) throw std::invalid_argument("GaussianComponent: empty mean");
    if (cov.rows() != d || cov.cols() != d) {
        throw std::invalid_argument("GaussianComponent: covariance dimension does not match mean");
    }
    if (!mean.allFinite() || !cov.allFinite()) throw std::invalid_argument("GaussianComponent: non-finite entries");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw std::invalid_argument("GaussianComponent: covariance is not symmetric");
    }
    cov = symmetrized(cov);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
        throw std::invalid_argument("GaussianComponent: covariance is not positive semidefinite");
    }
    basis = eig.eigenvectors();
    eigenvalues = eig.eigenvalues().cwiseMax(0.0);
    // exact zeros stay exact; tiny negative rounding noise is clamped away
    if (cov.isZero(0.0)) {
        basis = Matrix::Identity(d, d);
        eigenvalues = Vector::Zero(d);
    }
}

const char* to_string(TargetFamily family) {
    switch (family) {
        case TargetFamily::gaussian: return "gaussian";
        case TargetFamily::point_mass: return "point_mass";
        case TargetFamily::mixture: return "mixture";
    }
    return "?";
}

const char* to_string(ExpectationMethod method) {
    switch (method) {
        case ExpectationMethod::closed_form: return "closed_form";
        case ExpectationMethod::quadrature: return "quadrature";
        case ExpectationMethod::monte_carlo: return "monte_carlo";
    }
    return "?";
}

Target::Target(std::vector<double> weights, std::vector<GaussianComponent> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("Target: need at least one component");
    if (weights_.size() != components_.size()) throw std::invalid_argument("Target: one weight per component");
    double total = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0)) throw std::invalid_argument("Target: weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("Target: weights must sum to 1");
    for (const auto& c : components_) {
        if (c.dim() != components_.front().dim()) {
            throw std::invalid_argument("Target: components have different dimensions");
        }
    }
    log_weights_.reserve(weights_.size());
    for (double w : weights_) log_weights_.push_back(std::log(w));
}

Target Target::gaussian(Vector mean, Matrix cov) {
    return Target({1.0}, {GaussianComponent(std::move(mean), std::move(cov))});
}

Target Target::standard_gaussian(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return gaussian(Vector::Zero(d), Matrix::Identity(d, d));
}

Target Target::point_mass(Vector location) {
    const auto d = location.size();
    return gaussian(std::move(location), Matrix::Zero(d, d));
}

Target Target::atoms(std::vector<double> weights, const Matrix& locations) {
    std::vector<GaussianComponent> comps;
    const auto d = locations.rows();
    for (Eigen::Index j = 0; j < locations.cols(); ++j) {
        comps.emplace_back(locations.col(j), Matrix::Zero(d, d));
    }
    return Target(std::move(weights), std::move(comps));
}

Target Target::product(const Target& factor, std::size_t copies) {
    if (!factor.is_single_component()) {
        throw std::invalid_argument("Target::product: factor must be a single Gaussian or point mass");
    }
    if (copies == 0) throw std::invalid_argument("Target::product: need at least one copy");
    const auto& c = factor.components().front();
    const auto k = c.mean.size();
    const auto d = k * static_cast<Eigen::Index>(copies);
    Vector mean(d);
    Matrix cov = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(copies); ++i) {
        mean.segment(i * k, k) = c.mean;
        cov.block(i * k, i * k, k, k) = c.cov;
    }
    return gaussian(std::move(mean), std::move(cov));
}

TargetFamily Target::family() const {
    if (components_.size() > 1) return TargetFamily::mixture;
    return components_.front().eigenvalues.isZero(0.0) ? TargetFamily::point_mass : TargetFamily::gaussian;
}

bool Target::is_atomic() const {
    return std::all_of(components_.begin(), components_.end(),
                       [](const GaussianComponent& c) { return c.eigenvalues.isZero(0.0); });
}

Vector Target::mean() const {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < components_.size(); ++j) m += weights_[j] * components_[j].mean;
    return m;
}

Matrix Target::covariance() const {
    const Vector m = mean();
    const auto d = static_cast<Eigen::Index>(dim());
    Matrix c = Matrix::Zero(d, d);
    for (std::size_t j = 0; j < components_.size(); ++j) {
        const Vector diff = components_[j].mean - m;
        c += weights_[j] * (components_[j].cov + diff * diff.transpose());
    }
    return c;
}

double Target::second_moment() const {
    double total = 0.0;
    for (std::size_t j = 0; j < components_.size(); ++j) {
        total += weights_[j] * (components_[j].mean.squaredNorm() + components_[j].cov.trace());
    }
    return total;
}

bool Target::has_unit_covariance(double tol) const {
    const auto d = static_cast<Eigen::Index>(dim());
    return (covariance() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= tol;
}

struct TargetAccess {
    static const std::vector<double>& log_weights(const Target& t) { return t.log_weights_; }
};

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_query(const Target& target, const Vector& x, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("noisy-marginal query needs t > 0");
    if (static_cast<std::size_t>(x.size()) != target.dim()) throw std::invalid_argument("point has wrong dimension");
    if (!x.allFinite()) throw std::invalid_argument("point must be finite");
}

// Per-component quantities of the noisy marginal N(e^{-t} mu, e^{-2t} C + sigma^2 I),
// expressed in the component's eigenbasis.
struct ComponentTerms {
    double log_joint = 0.0;  // log w_j + log N(x; nu_j, S_j)
    Vector z;                // basis^T (x - nu_j)
    Vector s;                // eigenvalues of S_j
};

struct NoisyEvaluation {
    std::vector<ComponentTerms> terms;
    std::vector<double> resp;
    double log_density = 0.0;
    double decay = 0.0;  // e^{-t}
    double var = 0.0;    // sigma_t^2
};

NoisyEvaluation evaluate_components(const Target& target, const Vector& x, double t) {
    check_query(target, x, t);
    NoisyEvaluation ev;
    ev.decay = std::exp(-t);
    ev.var = sigma_sq(t);
    const auto& comps = target.components();
    const auto& logw = TargetAccess::log_weights(target);
    ev.terms.resize(comps.size());
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < comps.size(); ++j) {
        const auto& c = comps[j];
        auto& term = ev.terms[j];
        term.z = c.basis.transpose() * (x - ev.decay * c.mean);
        term.s = (ev.decay * ev.decay) * c.eigenvalues.array() + ev.var;
        double ll = 0.0;
        for (Eigen::Index i = 0; i < term.z.size(); ++i) {
            ll -= 0.5 * (kLog2Pi + std::log(term.s[i]) + term.z[i] * term.z[i] / term.s[i]);
        }
        term.log_joint = logw[j] + ll;
        max_log = std::max(max_log, term.log_joint);
    }
    double total = 0.0;
    ev.resp.resize(comps.size());
    for (std::size_t j = 0; j < comps.size(); ++j) {
        ev.resp[j] = std::exp(ev.terms[j].log_joint - max_log);
        total += ev.resp[j];
    }
    for (double& r : ev.resp) r /= total;
    ev.log_density = max_log + std::log(total);
    return ev;
}

}  // namespace

PosteriorMoments posterior_moments(const Target& target, const Vector& x, double t) {
    const auto ev = evaluate_components(target, x, t);
    const auto& comps = target.components();
    const auto d = static_cast<Eigen::Index>(target.dim());
    std::vector<Vector> means(comps.size());
    PosteriorMoments out{Vector::Zero(d), Matrix::Zero(d, d)};
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (ev.resp[j] == 0.0) continue;
        const auto& c = comps[j];
        const auto& term = ev.terms[j];
        const Vector gain = ev.decay * c.eigenvalues.array() / term.s.array();
        means[j] = c.mean + c.basis * gain.cwiseProduct(term.z);
        const Vector post_var = c.eigenvalues.array() * ev.var / term.s.array();
        out.m += ev.resp[j] * means[j];
        out.sigma.noalias() += ev.resp[j] * (c.basis * post_var.asDiagonal() * c.basis.transpose());
    }
    if (comps.size() > 1) {
        for (std::size_t j = 0; j < comps.size(); ++j) {
            if (ev.resp[j] == 0.0) continue;
            const Vector diff = means[j] - out.m;
            out.sigma.noalias() += ev.resp[j] * diff * diff.transpose();
        }
    }
    out.sigma = symmetrized(out.sigma);
    return out;
}

Vector score(const Target& target, const Vector& x, double t) {
    const auto pm = posterior_moments(target, x, t);
    return (std::exp(-t) * pm.m - x) / sigma_sq(t);
}

Matrix score_hessian(const Target& target, const Vector& x, double t) {
    const auto pm = posterior_moments(target, x, t);
    const double var = sigma_sq(t);
    const auto d = static_cast<Eigen::Index>(target.dim());
    return -Matrix::Identity(d, d) / var + (std::exp(-2.0 * t) / (var * var)) * pm.sigma;
}

double log_density(const Target& target, const Vector& x, double t) { return evaluate_components(target, x, t).log_density; }

Vector score_from_density(const Target& target, const Vector& x, double t) {
    const auto ev = evaluate_components(target, x, t);
    const auto& comps = target.components();
    Vector g = Vector::Zero(x.size());
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (ev.resp[j] == 0.0) continue;
        const Vector local = ev.terms[j].z.cwiseQuotient(ev.terms[j].s);
        g -= ev.resp[j] * (comps[j].basis * local);
    }
    return g;
}

Matrix hessian_from_density(const Target& target, const Vector& x, double t) {
    const auto ev = evaluate_components(target, x, t);
    const auto& comps = target.components();
    const auto d = x.size();
    std::vector<Vector> grads(comps.size());
    Vector g = Vector::Zero(d);
    Matrix h = Matrix::Zero(d, d);
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (ev.resp[j] == 0.0) continue;
        const auto& c = comps[j];
        grads[j] = -(c.basis * ev.terms[j].z.cwiseQuotient(ev.terms[j].s));
        g += ev.resp[j] * grads[j];
        h.noalias() -= ev.resp[j] * (c.basis * ev.terms[j].s.cwiseInverse().asDiagonal() * c.basis.transpose());
    }
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (ev.resp[j] == 0.0) continue;
        const Vector diff = grads[j] - g;
        h.noalias() += ev.resp[j] * diff * diff.transpose();
    }
    return symmetrized(h);
}

namespace {

const GaussianComponent& require_single(const Target& target) {
    if (!target.is_single_component()) {
        throw std::invalid_argument("closed-form expectation is only available for Gaussian or point-mass targets");
    }
    return target.components().front();
}

// Posterior variances along the component eigenbasis: lambda sigma^2 / (e^{-2t} lambda + sigma^2).
Vector closed_form_posterior_spectrum(const GaussianComponent& c, double t) {
    const double var = sigma_sq(t);
    const double decay_sq = std::exp(-2.0 * t);
    return c.eigenvalues.array() * var / (decay_sq * c.eigenvalues.array() + var);
}

template <class Functional>
Estimate expected_functional(const Target& target, double t, ExpectationMethod method, std::size_t budget, Seed seed,
                             Functional&& of_sigma) {
    if (!(t > 0.0)) throw std::invalid_argument("expected_trace_sigma: t must be positive");
    switch (method) {
        case ExpectationMethod::closed_form: {
            const auto& c = require_single(target);
            const Vector spectrum = closed_form_posterior_spectrum(c, t);
            return {of_sigma(Matrix(spectrum.asDiagonal())), 0.0};
        }
        case ExpectationMethod::quadrature: {
            if (target.dim() != 1) throw std::invalid_argument("quadrature expectation needs a one-dimensional target");
            const double value = integrate_marginal(target, t, [&](double x) {
                return of_sigma(posterior_moments(target, Vector::Constant(1, x), t).sigma);
            });
            return {value, 0.0};
        }
        case ExpectationMethod::monte_carlo: {
            if (budget < 2) throw std::invalid_argument("monte-carlo expectation needs at least 2 draws");
            std::vector<double> values(budget);
            parallel_for(budget, [&](std::size_t i) {
                Stream stream = substream(seed, i);
                const Vector x = draw_noisy(target, t, stream);
                values[i] = of_sigma(posterior_moments(target, x, t).sigma);
            });
            return mean_estimate(values);
        }
    }
    throw std::invalid_argument("unknown expectation method");
}

}  // namespace

Estimate expected_trace_sigma(const Target& target, double t, ExpectationMethod method, std::size_t budget, Seed seed) {
    return expected_functional(target, t, method, budget, seed, [](const Matrix& s) { return s.trace(); });
}

Estimate expected_trace_sigma_sq(const Target& target, double t, ExpectationMethod method, std::size_t budget,
                                 Seed seed) {
    return expected_functional(target, t, method, budget, seed, [](const Matrix& s) { return s.squaredNorm(); });
}

Matrix expected_sigma_closed_form(const Target& target, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("expected_sigma_closed_form: t must be positive");
    const auto& c = require_single(target);
    return symmetrized(c.basis * closed_form_posterior_spectrum(c, t).asDiagonal() * c.basis.transpose());
}

Matrix expected_sigma_sq_closed_form(const Target& target, double t) {
    const Matrix s = expected_sigma_closed_form(target, t);
    return symmetrized(s * s);
}

Matrix expected_sigma_derivative_closed_form(const Target& target, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("expected_sigma_derivative_closed_form: t must be positive");
    const auto& c = require_single(target);
    const double decay_sq = std::exp(-2.0 * t);
    const Vector denom = decay_sq * c.eigenvalues.array() + sigma_sq(t);
    // d/dt [lambda sigma^2 / D] = 2 lambda^2 e^{-2t} / D^2
    const Vector rate = 2.0 * decay_sq * c.eigenvalues.array().square() / denom.array().square();
    return symmetrized(c.basis * rate.asDiagonal() * c.basis.transpose());
}

Vector draw(const Target& target, Stream& stream) {
    const auto& weights = target.weights();
    std::size_t j = 0;
    if (weights.size() > 1) {
        const double u = stream.uniform();
        double cumulative = 0.0;
        j = weights.size() - 1;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            cumulative += weights[k];
            if (u < cumulative) {
                j = k;
                break;
            }
        }
    }
    const auto& c = target.components()[j];
    Vector xi(c.mean.size());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = std::sqrt(c.eigenvalues[i]) * stream.normal();
    return c.mean + c.basis * xi;
}

Vector draw_noisy(const Target& target, double t, Stream& stream) {
    Vector x = draw(target, stream);
    if (t == 0.0) return x;
    x *= std::exp(-t);
    const double sd = std::sqrt(sigma_sq(t));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += sd * stream.normal();
    return x;
}

Matrix sample_data(const Target& target, std::size_t n, Seed seed) {
    if (n < 1) throw std::invalid_argument("sample_data: need n >= 1");
    Matrix out(static_cast<Eigen::Index>(target.dim()), static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        Stream stream = substream(seed, i);
        out.col(static_cast<Eigen::Index>(i)) = draw(target, stream);
    });
    return out;
}

}  // namespace diffkl
