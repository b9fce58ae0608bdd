#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace diffkl {

/// Noise variance of the OU forward kernel, 1 - exp(-2t).
double sigma_sq(double t);

/// Time derivative of sigma_t; satisfies sigma_dot(t) * sigma_t = exp(-2t).
double sigma_dot(double t);

/// Diffusion time t(s) = 1/2 log(1 + 1/s) for localization time s > 0.
double diffusion_time(double s);

/// Inverse of diffusion_time: s(t) = 1 / (exp(2t) - 1) for t > 0.
double localization_time(double t);

/**
 * Reverse-time discretization 0 = t_0 < ... < t_N = T - delta.
 *
 * Residuals T - t_k are stored explicitly rather than recomputed by
 * subtraction, since the geometric phase drives them down to delta and the
 * step-size condition is evaluated against them. kappa is the smallest
 * constant with gamma_k <= kappa * min(1, T - t_{k+1}) for every k.
 */
class TimeGrid {
public:
    TimeGrid(std::string scheme, double horizon, double early_stop, std::vector<double> times,
             std::vector<double> residuals);

    const std::string& scheme() const { return scheme_; }
    double horizon() const { return horizon_; }
    double early_stop() const { return early_stop_; }
    double kappa() const { return kappa_; }
    std::size_t steps() const { return gammas_.size(); }

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& residuals() const { return residuals_; }
    const std::vector<double>& gammas() const { return gammas_; }

    // Forward-process time at grid index k (the score's time argument).
    double forward_time(std::size_t k) const { return residuals_[k]; }
    double total_length() const;

    // Condition under which the two-phase kappa scales as (T + log(1/delta)) / N.
    bool satisfies_step_count_condition() const;

    // Hex digest over the grid arrays and parameters.
    std::string hash() const;

    void write_csv(std::ostream& out) const;

private:
    std::string scheme_;
    double horizon_;
    double early_stop_;
    std::vector<double> times_;
    std::vector<double> residuals_;
    std::vector<double> gammas_;
    double kappa_ = 0.0;
};

// Max over k of gamma_k / min(1, residual_{k+1}).
double max_step_ratio(const std::vector<double>& gammas, const std::vector<double>& residuals);

/// Half the steps linearly spaced on [0, T-1], the rest with residuals
/// decaying geometrically from 1 to delta. Odd N gives the linear phase the
/// extra step. T == 1 leaves the linear phase empty, so every step is geometric.
TimeGrid make_two_phase_grid(std::size_t n_steps, double horizon, double early_stop);

TimeGrid make_uniform_grid(std::size_t n_steps, double horizon, double early_stop);

}  // namespace diffkl
