#include "diffkl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace diffkl {

double sigma_sq(double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("sigma_sq: time must be nonnegative");
    return -std::expm1(-2.0 * t);
}

double sigma_dot(double t) {
    if (!(t > 0.0)) throw std::invalid_argument("sigma_dot: time must be positive");
    return std::exp(-2.0 * t) / std::sqrt(sigma_sq(t));
}

double diffusion_time(double s) {
    if (!(s > 0.0)) throw std::invalid_argument("diffusion_time: localization time must be positive");
    return 0.5 * std::log1p(1.0 / s);
}

double localization_time(double t) {
    if (!(t > 0.0)) throw std::invalid_argument("localization_time: diffusion time must be positive");
    return 1.0 / std::expm1(2.0 * t);
}

double max_step_ratio(const std::vector<double>& gammas, const std::vector<double>& residuals) {
    double kappa = 0.0;
    for (std::size_t k = 0; k < gammas.size(); ++k) {
        kappa = std::max(kappa, gammas[k] / std::min(1.0, residuals[k + 1]));
    }
    return kappa;
}

TimeGrid::TimeGrid(std::string scheme, double horizon, double early_stop, std::vector<double> times,
                   std::vector<double> residuals)
    : scheme_(std::move(scheme)),
      horizon_(horizon),
      early_stop_(early_stop),
      times_(std::move(times)),
      residuals_(std::move(residuals)) {
    if (times_.size() < 2) throw std::invalid_argument("TimeGrid: need at least one step");
    if (times_.size() != residuals_.size()) throw std::invalid_argument("TimeGrid: times/residuals size mismatch");
    if (times_.front() != 0.0) throw std::invalid_argument("TimeGrid: t_0 must be 0");
    const double tol = 1e-12 * std::max(1.0, horizon_);
    for (std::size_t k = 0; k < times_.size(); ++k) {
        if (!(residuals_[k] > 0.0)) throw std::invalid_argument("TimeGrid: residuals must be positive");
        if (std::abs(times_[k] + residuals_[k] - horizon_) > tol) {
            throw std::invalid_argument("TimeGrid: times and residuals do not sum to the horizon");
        }
        if (k > 0 && !(times_[k] > times_[k - 1] && residuals_[k] < residuals_[k - 1])) {
            throw std::invalid_argument("TimeGrid: times must be strictly increasing");
        }
    }
    if (std::abs(residuals_.back() - early_stop_) > 1e-12 * early_stop_) {
        throw std::invalid_argument("TimeGrid: final residual must equal the early-stopping time");
    }
    gammas_.resize(times_.size() - 1);
    for (std::size_t k = 0; k + 1 < times_.size(); ++k) {
        // residual differences are exact where times are not (geometric phase)
        gammas_[k] = residuals_[k] - residuals_[k + 1];
    }
    kappa_ = max_step_ratio(gammas_, residuals_);
    // gamma/m <= kappa does not imply gamma <= kappa*m after rounding
    for (std::size_t k = 0; k < gammas_.size(); ++k) {
        while (gammas_[k] > kappa_ * std::min(1.0, residuals_[k + 1])) {
            kappa_ = std::nextafter(kappa_, INFINITY);
        }
    }
}

double TimeGrid::total_length() const {
    double sum = 0.0;
    for (double g : gammas_) sum += g;
    return sum;
}

bool TimeGrid::satisfies_step_count_condition() const {
    return static_cast<double>(steps()) >= std::log(1.0 / early_stop_);
}

std::string TimeGrid::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    feed(scheme_.data(), scheme_.size());
    feed(&horizon_, sizeof horizon_);
    feed(&early_stop_, sizeof early_stop_);
    feed(times_.data(), times_.size() * sizeof(double));
    feed(residuals_.data(), residuals_.size() * sizeof(double));
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void TimeGrid::write_csv(std::ostream& out) const {
    const auto old_precision = out.precision(17);
    out << "# scheme=" << scheme_ << ",T=" << horizon_ << ",delta=" << early_stop_ << ",kappa=" << kappa_
        << '\n';
    out << "k,t_k,residual_k,gamma_k\n";
    for (std::size_t k = 0; k < times_.size(); ++k) {
        out << k << ',' << times_[k] << ',' << residuals_[k] << ',';
        if (k < gammas_.size()) out << gammas_[k];
        out << '\n';
    }
    out.precision(old_precision);
}

TimeGrid make_two_phase_grid(std::size_t n_steps, double horizon, double early_stop) {
    if (n_steps < 2) throw std::invalid_argument("make_two_phase_grid: need at least 2 steps");
    if (!(horizon >= 1.0)) throw std::invalid_argument("make_two_phase_grid: horizon must be >= 1");
    if (!(early_stop > 0.0 && early_stop < 1.0)) {
        throw std::invalid_argument("make_two_phase_grid: early_stop must lie in (0, 1)");
    }
    const bool has_linear_phase = horizon > 1.0;
    const std::size_t linear_steps = has_linear_phase ? (n_steps + 1) / 2 : 0;
    const std::size_t geometric_steps = n_steps - linear_steps;

    std::vector<double> times(n_steps + 1);
    std::vector<double> residuals(n_steps + 1);
    for (std::size_t k = 0; k <= linear_steps; ++k) {
        times[k] = (horizon - 1.0) * static_cast<double>(k) / static_cast<double>(linear_steps);
        residuals[k] = horizon - times[k];
    }
    if (linear_steps == 0) {
        times[0] = 0.0;
        residuals[0] = 1.0;
    }
    times[linear_steps] = horizon - 1.0;
    residuals[linear_steps] = 1.0;
    const double log_delta = std::log(early_stop);
    for (std::size_t j = 1; j <= geometric_steps; ++j) {
        const std::size_t k = linear_steps + j;
        residuals[k] = j == geometric_steps
                           ? early_stop
                           : std::exp(log_delta * static_cast<double>(j) / static_cast<double>(geometric_steps));
        times[k] = horizon - residuals[k];
    }
    return TimeGrid("two_phase", horizon, early_stop, std::move(times), std::move(residuals));
}

TimeGrid make_uniform_grid(std::size_t n_steps, double horizon, double early_stop) {
    if (n_steps < 1) throw std::invalid_argument("make_uniform_grid: need at least 1 step");
    if (!(early_stop > 0.0 && early_stop < horizon)) {
        throw std::invalid_argument("make_uniform_grid: need 0 < early_stop < horizon");
    }
    std::vector<double> times(n_steps + 1);
    std::vector<double> residuals(n_steps + 1);
    const double end = horizon - early_stop;
    for (std::size_t k = 0; k <= n_steps; ++k) {
        times[k] = end * static_cast<double>(k) / static_cast<double>(n_steps);
        residuals[k] = horizon - times[k];
    }
    times[n_steps] = end;
    residuals[n_steps] = early_stop;
    return TimeGrid("uniform", horizon, early_stop, std::move(times), std::move(residuals));
}

}  // namespace diffkl
