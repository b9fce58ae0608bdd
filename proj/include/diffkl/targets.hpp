#pragma once

#include <cstddef>
#include <vector>

#include "diffkl/linalg.hpp"
#include "diffkl/report.hpp"
#include "diffkl/rng.hpp"

namespace diffkl {

/// Gaussian law N(mean, cov) with cov kept as an eigendecomposition.
/// Eigenvalues are clamped at zero, so point masses are zero-covariance
/// components and share the conditioning code path.
struct GaussianComponent {
    Vector mean;
    Matrix cov;
    Matrix basis;
    Vector eigenvalues;

    GaussianComponent(Vector mean, Matrix cov);
    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

enum class TargetFamily { gaussian, point_mass, mixture };

const char* to_string(TargetFamily family);

/// Data law with closed-form noisy marginals: a finite mixture of Gaussian
/// components (a single component is a Gaussian or a point mass).
class Target {
public:
    Target(std::vector<double> weights, std::vector<GaussianComponent> components);

    static Target gaussian(Vector mean, Matrix cov);
    static Target standard_gaussian(std::size_t dim);
    static Target point_mass(Vector location);
    // Atoms given as columns.
    static Target atoms(std::vector<double> weights, const Matrix& locations);
    // Product law of `copies` independent copies of a single-component target.
    static Target product(const Target& factor, std::size_t copies);

    TargetFamily family() const;
    std::size_t dim() const { return components_.front().dim(); }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<GaussianComponent>& components() const { return components_; }
    bool is_single_component() const { return components_.size() == 1; }
    bool is_atomic() const;

    Vector mean() const;
    Matrix covariance() const;
    double second_moment() const;  // E||x_0||^2
    bool has_unit_covariance(double tol = 1e-12) const;

private:
    std::vector<double> weights_;
    std::vector<double> log_weights_;
    std::vector<GaussianComponent> components_;

    friend struct TargetAccess;
};

/// Posterior mean m_t(x) and covariance Sigma_t(x) of x_0 given x_t = x.
struct PosteriorMoments {
    Vector m;
    Matrix sigma;
};

PosteriorMoments posterior_moments(const Target& target, const Vector& x, double t);

// Score via the posterior-mean route: (-x + e^{-t} m_t) / sigma_t^2.
Vector score(const Target& target, const Vector& x, double t);

// -sigma_t^{-2} I + e^{-2t} sigma_t^{-4} Sigma_t.
Matrix score_hessian(const Target& target, const Vector& x, double t);

// log q_t(x) and its derivatives taken directly from the mixture density; an
// independent route to the two functions above.
double log_density(const Target& target, const Vector& x, double t);
Vector score_from_density(const Target& target, const Vector& x, double t);
Matrix hessian_from_density(const Target& target, const Vector& x, double t);

enum class ExpectationMethod { closed_form, quadrature, monte_carlo };

const char* to_string(ExpectationMethod method);

/// E over x_t ~ q_t of Tr Sigma_t(x_t). closed_form needs a single-component
/// target, quadrature a one-dimensional one; monte_carlo uses `budget` draws.
Estimate expected_trace_sigma(const Target& target, double t, ExpectationMethod method, std::size_t budget = 100000,
                              Seed seed = {});

// Same, for E Tr(Sigma_t^2).
Estimate expected_trace_sigma_sq(const Target& target, double t, ExpectationMethod method,
                                 std::size_t budget = 100000, Seed seed = {});

// E Sigma_t as a matrix (closed form, single-component targets only).
Matrix expected_sigma_closed_form(const Target& target, double t);
Matrix expected_sigma_sq_closed_form(const Target& target, double t);
// Exact time derivative of E Sigma_t (closed form).
Matrix expected_sigma_derivative_closed_form(const Target& target, double t);

// One draw from the target, and one from q_t = law of e^{-t} x_0 + sigma_t xi.
Vector draw(const Target& target, Stream& stream);
Vector draw_noisy(const Target& target, double t, Stream& stream);

/// n i.i.d. draws from the target, one point per column.
Matrix sample_data(const Target& target, std::size_t n, Seed seed);

}  // namespace diffkl
