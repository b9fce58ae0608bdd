#include <cmath>
#include <numbers>
#include <stdexcept>

#include "doctest.h"

#include "diffkl/quadrature.hpp"
#include "diffkl/schedule.hpp"
#include "diffkl/targets.hpp"

using namespace diffkl;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Target two_point(double w_minus = 0.5) { return Target::atoms({w_minus, 1.0 - w_minus}, vec({-1.0, 1.0}).transpose()); }

Target gaussian_mixture_1d() {
    return Target({0.3, 0.7}, {GaussianComponent(vec({-1.5}), Matrix::Constant(1, 1, 0.2)),
                               GaussianComponent(vec({0.8}), Matrix::Constant(1, 1, 0.5))});
}

Target gaussian_mixture_2d() {
    Matrix c1(2, 2), c2(2, 2);
    c1 << 0.3, 0.1, 0.1, 0.2;
    c2 << 0.5, -0.2, -0.2, 0.4;
    return Target({0.4, 0.6}, {GaussianComponent(vec({1.0, -0.5}), c1), GaussianComponent(vec({-0.7, 0.9}), c2)});
}

// log q_t(x) for a one-dimensional mixture, written out directly from the OU kernel.
double oracle_log_density_1d(const std::vector<double>& w, const std::vector<double>& mu, const std::vector<double>& var,
                             double x, double t) {
    const double decay = std::exp(-t);
    const double noise = 1.0 - std::exp(-2.0 * t);
    double p = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double v = decay * decay * var[j] + noise;
        const double z = x - decay * mu[j];
        p += w[j] * std::exp(-0.5 * z * z / v) / std::sqrt(2.0 * std::numbers::pi * v);
    }
    return std::log(p);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("posterior moments: reference values") {
    const double t = 0.5 * std::log(2.0);
    const auto g = Target::standard_gaussian(1);
    const auto pm = posterior_moments(g, vec({0.7}), t);
    CHECK(pm.m[0] == doctest::Approx(0.7 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(pm.m[0] == doctest::Approx(0.4949747468305833).epsilon(1e-14));
    CHECK(pm.sigma(0, 0) == doctest::Approx(0.5).epsilon(1e-14));

    const auto pt = Target::point_mass(vec({2.0, -1.0}));
    for (double tt : {0.01, 0.7, 5.0}) {
        const auto p = posterior_moments(pt, vec({0.3, 8.0}), tt);
        CHECK(p.m[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(p.m[1] == doctest::Approx(-1.0).epsilon(1e-15));
        CHECK(p.sigma.cwiseAbs().maxCoeff() == 0.0);
    }

    const auto mix = two_point();
    for (double tt : {0.01, 0.5, 3.0}) {
        const auto p = posterior_moments(mix, vec({0.0}), tt);
        CHECK(std::abs(p.m[0]) <= 1e-15);
        CHECK(p.sigma(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("posterior moments: rejected inputs") {
    const auto g = Target::standard_gaussian(2);
    CHECK_THROWS_AS(posterior_moments(g, vec({0.0, 0.0}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(posterior_moments(g, vec({NAN, 0.0}), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(posterior_moments(g, vec({0.0}), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(score(g, vec({0.0, 0.0}), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(score_hessian(g, vec({0.0, 0.0}), 0.0), std::invalid_argument);
}

TEST_CASE("score reference values") {
    const auto g = Target::standard_gaussian(3);
    const Vector x = vec({0.4, -1.2, 2.5});
    for (double t : {1e-3, 0.2, 1.0, 6.0}) {
        CHECK((score(g, x, t) + x).norm() <= 1e-12 * x.norm() / sigma_sq(t));
        const Matrix h = score_hessian(g, x, t);
        CHECK((h + Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-9);
    }
    const auto pt = Target::point_mass(Vector::Zero(3));
    for (double t : {0.05, 1.0}) {
        CHECK((score(pt, x, t) + x / sigma_sq(t)).norm() <= 1e-12 * x.norm() / sigma_sq(t));
        CHECK((score_hessian(pt, x, t) + Matrix::Identity(3, 3) / sigma_sq(t)).cwiseAbs().maxCoeff() <= 1e-12 / sigma_sq(t));
    }
}

TEST_CASE("score and Hessian match finite differences of an independent mixture density") {
    const std::vector<double> w{0.5, 0.5}, mu{-1.0, 1.0}, var{0.0, 0.0};
    const auto mix = two_point();
    const double x = 0.3, t = 0.5;
    const double h = 1e-5;
    const double fd = (oracle_log_density_1d(w, mu, var, x + h, t) - oracle_log_density_1d(w, mu, var, x - h, t)) / (2 * h);
    CHECK(std::abs(score(mix, vec({x}), t)[0] - fd) <= 1e-5);
    const double h2 = 1e-4;
    const double fd2 = (oracle_log_density_1d(w, mu, var, x + h2, t) - 2 * oracle_log_density_1d(w, mu, var, x, t) +
                        oracle_log_density_1d(w, mu, var, x - h2, t)) /
                       (h2 * h2);
    CHECK(std::abs(score_hessian(mix, vec({x}), t)(0, 0) - fd2) <= 1e-4);
    CHECK(std::abs(log_density(mix, vec({x}), t) - oracle_log_density_1d(w, mu, var, x, t)) <= 1e-13);

    const auto gm = gaussian_mixture_1d();
    const std::vector<double> w2{0.3, 0.7}, mu2{-1.5, 0.8}, var2{0.2, 0.5};
    for (double xx : {-2.0, -0.3, 0.0, 1.1}) {
        for (double tt : {0.05, 0.5, 2.0}) {
            const double d1 = (oracle_log_density_1d(w2, mu2, var2, xx + h, tt) -
                               oracle_log_density_1d(w2, mu2, var2, xx - h, tt)) /
                              (2 * h);
            CHECK(std::abs(score(gm, vec({xx}), tt)[0] - d1) <= 1e-5 * std::max(1.0, std::abs(d1)));
        }
    }
}

TEST_CASE("moment route and density route agree") {
    for (const auto& target : {gaussian_mixture_2d(), Target::atoms({0.2, 0.5, 0.3}, (Matrix(2, 3) << 1, -1, 0, 0, 2, -2).finished())}) {
        for (double t : {0.02, 0.3, 1.0, 4.0}) {
            for (const Vector& x : {vec({0.1, 0.2}), vec({-1.5, 2.0}), vec({3.0, -0.4})}) {
                const Vector a = score(target, x, t);
                const Vector b = score_from_density(target, x, t);
                CHECK((a - b).norm() <= 1e-12 * std::max(1.0, b.norm()) / sigma_sq(t));
                const Matrix ha = score_hessian(target, x, t);
                const Matrix hb = hessian_from_density(target, x, t);
                CHECK((ha - hb).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, hb.cwiseAbs().maxCoeff()) / sigma_sq(t));
            }
        }
    }
}

TEST_CASE("posterior covariance is PSD and bounded by the conditional second moment") {
    const auto target = gaussian_mixture_2d();
    Stream stream(Seed{11});
    for (int i = 0; i < 500; ++i) {
        const double t = 0.01 + 3.0 * stream.uniform();
        const Vector x = draw_noisy(target, t, stream);
        const auto pm = posterior_moments(target, x, t);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(pm.sigma);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
        CHECK((pm.sigma - pm.sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);
        // Tr Sigma <= E[|x_0|^2 | x_t] = Tr Sigma + |m|^2
        CHECK(pm.sigma.trace() <= pm.sigma.trace() + pm.m.squaredNorm());
        const Matrix h = score_hessian(target, x, t);
        Eigen::SelfAdjointEigenSolver<Matrix> eh(h);
        CHECK(eh.eigenvalues().minCoeff() >= -1.0 / sigma_sq(t) * (1.0 + 1e-12));
    }
}

TEST_CASE("expected trace of Sigma_t") {
    const auto g = Target::standard_gaussian(4);
    for (double t : {0.01, 0.4, 2.0}) {
        CHECK(rel_err(expected_trace_sigma(g, t, ExpectationMethod::closed_form).value, 4 * sigma_sq(t)) <= 1e-14);
        CHECK(rel_err(expected_trace_sigma_sq(g, t, ExpectationMethod::closed_form).value,
                      4 * sigma_sq(t) * sigma_sq(t)) <= 1e-14);
    }
    const auto pt = Target::point_mass(vec({1.0, 2.0}));
    CHECK(expected_trace_sigma(pt, 0.3, ExpectationMethod::closed_form).value == 0.0);
    CHECK_THROWS_AS(expected_trace_sigma(two_point(), 0.3, ExpectationMethod::closed_form), std::invalid_argument);
    CHECK_THROWS_AS(expected_trace_sigma(gaussian_mixture_2d(), 0.3, ExpectationMethod::quadrature), std::invalid_argument);
    CHECK_THROWS_AS(expected_trace_sigma(g, 0.0, ExpectationMethod::closed_form), std::invalid_argument);

    // small-t bound E Tr Sigma_t <= 16 d t
    const double t = 0.05;
    CHECK(expected_trace_sigma(g, t, ExpectationMethod::closed_form).value <= 16 * 4 * t);
    CHECK(expected_trace_sigma(two_point(), t, ExpectationMethod::quadrature).value <= 16 * t);
    const auto mc = expected_trace_sigma(gaussian_mixture_2d(), t, ExpectationMethod::monte_carlo, 20000, Seed{3});
    CHECK(mc.value + 3 * mc.std_err <= 16 * 2 * t);
}

TEST_CASE("quadrature and Monte Carlo expectations agree for a 1-d mixture") {
    const auto gm = gaussian_mixture_1d();
    for (double t : {0.1, 0.8}) {
        const double q = expected_trace_sigma(gm, t, ExpectationMethod::quadrature).value;
        const auto mc = expected_trace_sigma(gm, t, ExpectationMethod::monte_carlo, 100000, Seed{5});
        CHECK(std::abs(q - mc.value) <= 3 * mc.std_err);
        const double q2 = expected_trace_sigma_sq(gm, t, ExpectationMethod::quadrature).value;
        const auto mc2 = expected_trace_sigma_sq(gm, t, ExpectationMethod::monte_carlo, 100000, Seed{6});
        CHECK(std::abs(q2 - mc2.value) <= 3 * mc2.std_err);
    }
    // closed form versus quadrature for a 1-d Gaussian
    const auto g = Target::gaussian(vec({0.4}), Matrix::Constant(1, 1, 2.5));
    CHECK(rel_err(expected_trace_sigma(g, 0.3, ExpectationMethod::quadrature).value,
                  expected_trace_sigma(g, 0.3, ExpectationMethod::closed_form).value) <= 1e-9);
}

TEST_CASE("expected trace of Sigma_t is non-decreasing in t") {
    Matrix c(2, 2);
    c << 2.0, 0.3, 0.3, 0.5;
    const auto g = Target::gaussian(vec({1.0, -1.0}), c);
    const auto gm = gaussian_mixture_1d();
    const auto tp = two_point(0.3);
    double prev_g = 0.0, prev_m = 0.0, prev_t = 0.0;
    for (int i = 1; i <= 60; ++i) {
        const double t = 0.01 * std::pow(1.1, i);
        const double vg = expected_trace_sigma(g, t, ExpectationMethod::closed_form).value;
        const double vm = expected_trace_sigma(gm, t, ExpectationMethod::quadrature).value;
        const double vt = expected_trace_sigma(tp, t, ExpectationMethod::quadrature).value;
        CHECK(vg >= prev_g);
        CHECK(vm >= prev_m - 1e-9);
        CHECK(vt >= prev_t - 1e-9);
        prev_g = vg;
        prev_m = vm;
        prev_t = vt;
    }
}

TEST_CASE("closed-form derivative of E Sigma_t matches high-order differences") {
    Matrix c(2, 2);
    c << 2.0, 0.3, 0.3, 0.5;
    const auto g = Target::gaussian(vec({1.0, -1.0}), c);
    for (double t : {0.05, 0.5, 2.0}) {
        const double h = 1e-3;
        const Matrix fd = (-expected_sigma_closed_form(g, t + 2 * h) + 8 * expected_sigma_closed_form(g, t + h) -
                           8 * expected_sigma_closed_form(g, t - h) + expected_sigma_closed_form(g, t - 2 * h)) /
                          (12 * h);
        CHECK((fd - expected_sigma_derivative_closed_form(g, t)).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("sampling") {
    const auto pt = Target::point_mass(vec({1.5, -2.0}));
    const Matrix three = sample_data(pt, 3, Seed{1});
    for (int j = 0; j < 3; ++j) CHECK((three.col(j) - vec({1.5, -2.0})).norm() == 0.0);

    const std::size_t n = 100000;
    const auto g = Target::standard_gaussian(3);
    const Matrix s = sample_data(g, n, Seed{2});
    const Vector mean = s.rowwise().mean();
    for (int i = 0; i < 3; ++i) CHECK(std::abs(mean[i]) <= 3 * std::sqrt(3.0 / n));

    const auto mix = two_point(0.3);
    const Matrix m = sample_data(mix, n, Seed{3});
    const double freq = (m.array() < 0).cast<double>().sum() / n;
    CHECK(std::abs(freq - 0.3) <= 3 * std::sqrt(0.21 / n));
    CHECK_THROWS_AS(sample_data(g, 0, Seed{1}), std::invalid_argument);

    // identical seeds reproduce bitwise
    CHECK(sample_data(gaussian_mixture_2d(), 100, Seed{9}) == sample_data(gaussian_mixture_2d(), 100, Seed{9}));
}

TEST_CASE("normalization: unit-covariance targets have E|x_0|^2 = d") {
    const auto g = Target::standard_gaussian(5);
    CHECK(g.has_unit_covariance());
    CHECK(std::abs(g.second_moment() - 5.0) <= 1e-10);
    CHECK(two_point().has_unit_covariance());
    CHECK(!gaussian_mixture_1d().has_unit_covariance());
    const std::size_t n = 100000;
    const Matrix s = sample_data(two_point(), n, Seed{4});
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = s.col(static_cast<Eigen::Index>(i)).squaredNorm();
    const auto e = mean_estimate(norms);
    CHECK(std::abs(e.value - 1.0) <= std::max(3 * e.std_err, 1e-12));
    const Matrix sg = sample_data(g, n, Seed{5});
    for (std::size_t i = 0; i < n; ++i) norms[i] = sg.col(static_cast<Eigen::Index>(i)).squaredNorm();
    const auto eg = mean_estimate(norms);
    CHECK(std::abs(eg.value - 5.0) <= 3 * eg.std_err);
}

TEST_CASE("target construction validation") {
    CHECK_THROWS_AS(Target({0.5, 0.6}, {GaussianComponent(vec({0.0}), Matrix::Identity(1, 1)),
                                        GaussianComponent(vec({1.0}), Matrix::Identity(1, 1))}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Target({-0.5, 1.5}, {GaussianComponent(vec({0.0}), Matrix::Identity(1, 1)),
                                         GaussianComponent(vec({1.0}), Matrix::Identity(1, 1))}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Target({0.5, 0.5}, {GaussianComponent(vec({0.0}), Matrix::Identity(1, 1)),
                                        GaussianComponent(vec({1.0, 0.0}), Matrix::Identity(2, 2))}),
                    std::invalid_argument);
    Matrix asym(2, 2);
    asym << 1.0, 0.5, 0.4, 1.0;
    CHECK_THROWS_AS(GaussianComponent(vec({0.0, 0.0}), asym), std::invalid_argument);
    Matrix indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(GaussianComponent(vec({0.0, 0.0}), indefinite), std::invalid_argument);
    CHECK_THROWS_AS(GaussianComponent(vec({0.0}), Matrix::Identity(2, 2)), std::invalid_argument);
    Matrix degenerate(2, 2);
    degenerate << 1.0, 1.0, 1.0, 1.0;
    CHECK_NOTHROW(GaussianComponent(vec({0.0, 0.0}), degenerate));
    CHECK(to_string(Target::point_mass(vec({1.0})).family()) == std::string("point_mass"));
    CHECK(to_string(gaussian_mixture_1d().family()) == std::string("mixture"));
}

TEST_CASE("product targets are block diagonal") {
    Matrix c(2, 2);
    c << 0.5, 0.1, 0.1, 0.3;
    const auto factor = Target::gaussian(vec({0.3, -0.2}), c);
    const auto prod = Target::product(factor, 3);
    CHECK(prod.dim() == 6);
    CHECK(prod.covariance().block(2, 2, 2, 2) == c);
    CHECK(prod.covariance().block(0, 2, 2, 2).isZero(0.0));
    CHECK_THROWS_AS(Target::product(two_point(), 2), std::invalid_argument);
}

TEST_CASE("marginal quadrature integrates the density to one") {
    for (const auto& t : {gaussian_mixture_1d(), two_point(0.2), Target::point_mass(vec({3.0}))}) {
        for (double time : {0.01, 0.5, 3.0}) {
            CHECK(integrate_marginal(t, time, [](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}
