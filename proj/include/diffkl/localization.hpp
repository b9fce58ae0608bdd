#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "diffkl/linalg.hpp"
#include "diffkl/report.hpp"
#include "diffkl/rng.hpp"
#include "diffkl/targets.hpp"

namespace diffkl {

enum class LocalizationSource { direct, sde };

/// Observation paths U_s; paths[p] is d x s_grid.size().
struct LocalizationPath {
    std::vector<double> s_grid;
    std::vector<Matrix> paths;
    LocalizationSource source = LocalizationSource::direct;

    std::size_t n_paths() const { return paths.size(); }
};

// Posterior mean a_s(u) and covariance A_s(u) of x_* given U_s = u.
struct PosteriorFunctionals {
    Vector a;
    Matrix A;
};

// U_s = s x_* + W_s at every grid time; s_grid must start at 0 and increase.
LocalizationPath sl_direct_path(const Target& target, const std::vector<double>& s_grid, std::size_t n, Seed seed);

/// a_s and A_s through the diffusion: t = t(s), x = u / (s e^t), then m_t(x), Sigma_t(x).
PosteriorFunctionals sl_drift(const Target& target, const Vector& u, double s);

/// a_s and A_s by conditioning x_* on U_s = s x_* + W_s directly.
PosteriorFunctionals sl_drift_direct(const Target& target, const Vector& u, double s);

// Posterior masses of the atoms of a finite-support target, in component order.
std::vector<double> atom_posterior_masses(const Target& target, const Vector& u, double s);

inline constexpr double kLocalizationSMin = 1e-4;
inline constexpr double kLocalizationSMax = 1e3;

/**
 * Euler-Maruyama solution of dU = a_s(U) ds + dW on a geometric grid of
 * n_substeps steps from kLocalizationSMin to s_max, started from
 * N(0, kLocalizationSMin I). States are recorded at the first grid time, every
 * record_stride steps (0: none in between), and at s_max.
 */
LocalizationPath sl_sde_path(const Target& target, double s_max, std::size_t n_substeps, std::size_t n, Seed seed,
                             std::size_t record_stride = 0);

/// Mean and covariance entries of U_s against s e^{t(s)} X_{t(s)}, with z-scores.
std::vector<ReportRow> check_localization_equivalence(const Target& target, const std::vector<double>& s_points,
                                                      std::size_t n, Seed seed);

inline double default_ode_step(double t) { return 1e-4 * std::max(1.0, t); }

/**
 * sigma^3/(2 sigma_dot) d/dt E Sigma_t against E Sigma_t^2, as traces (and
 * entrywise for closed form), plus the s-coordinate form d/ds E A_s = -E A_s^2.
 * h <= 0 selects default_ode_step(t). closed_form uses the exact derivative.
 */
std::vector<ReportRow> check_covariance_ode(const Target& target, const std::vector<double>& t_points, double h,
                                            ExpectationMethod method, std::size_t budget = 100000, Seed seed = {});

// MC mean of each atom's posterior mass under the direct path against its prior mass.
std::vector<ReportRow> check_density_martingale(const Target& target, const std::vector<double>& s_points,
                                                std::size_t n, Seed seed);

/// Monte-Carlo estimate of E A_s with entrywise standard errors.
struct MatrixEstimate {
    Matrix value;
    Matrix std_err;
};

MatrixEstimate expected_localization_covariance(const Target& target, double s, std::size_t n, Seed seed);

// E A_s against E x x^T - E a_s a_s^T, entrywise.
std::vector<ReportRow> check_second_moment_identity(const Target& target, const std::vector<double>& s_points,
                                                    std::size_t n, Seed seed);

}  // namespace diffkl
