#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffkl/linalg.hpp"
#include "diffkl/report.hpp"
#include "diffkl/rng.hpp"
#include "diffkl/schedule.hpp"
#include "diffkl/targets.hpp"

namespace diffkl {

// s(x, t) = slope * x + offset at one forward time.
struct AffineForm {
    Matrix slope;
    Vector offset;
};

enum class PerturbationMode { constant_bias, per_step_bias };

const char* to_string(PerturbationMode mode);

/// Additive score error with discrete loss sum_k gamma_k |b_k|^2 = epsilon^2.
/// constant_bias uses one random direction; per_step_bias draws an
/// independent direction per grid interval, each with the same magnitude.
struct PerturbationSpec {
    PerturbationMode mode = PerturbationMode::constant_bias;
    double epsilon = 0.0;
    Seed direction_seed{};
};

struct OracleDescriptor {
    std::optional<PerturbationSpec> perturbation;  // empty: exact score
    std::function<Vector(double)> bias;           // additive bias at a forward time, perturbed only

    std::string label() const;
};

/// Score approximation s(x, t) at forward time t.
struct ScoreOracle {
    std::size_t dim = 0;
    std::function<Vector(const Vector&, double)> evaluate;
    OracleDescriptor descriptor;
    std::function<AffineForm(double)> affine;  // empty when not affine in x
    std::shared_ptr<const Target> target;      // attached for exact-q_T starts and loss accounting

    Vector operator()(const Vector& x, double t) const { return evaluate(x, t); }
    bool is_affine() const { return static_cast<bool>(affine); }
};

ScoreOracle exact_oracle(std::shared_ptr<const Target> target);
ScoreOracle exact_oracle(const Target& target);

ScoreOracle perturb_oracle(const ScoreOracle& exact, const PerturbationSpec& spec, const TimeGrid& grid);

// Index of the grid interval whose residual range (r_{k+1}, r_k] holds forward time t, clamped to [0, N-1].
std::size_t interval_at_forward_time(const TimeGrid& grid, double t);

/// Draws of x_t = e^{-t} x_0 + sigma_t xi, one per column.
Matrix forward_sample(const Target& target, double t, std::size_t n, Seed seed);

enum class PathDirection { forward, reverse };

/// Paths stored per trajectory: paths[p] is d x times.size().
struct PathBatch {
    std::vector<double> times;
    std::vector<Matrix> paths;
    PathDirection direction = PathDirection::reverse;

    std::size_t n_paths() const { return paths.size(); }
    std::size_t n_times() const { return times.size(); }
    std::size_t dim() const { return paths.empty() ? 0 : static_cast<std::size_t>(paths.front().rows()); }
};

// One exact joint draw of x at the given forward times (any order), columns in that order.
Matrix sample_forward_times(const Target& target, const std::vector<double>& forward_times, Stream& stream);
// Same, with `ascending` a precomputed ordering of forward_times from smallest to largest.
Matrix sample_forward_times(const Target& target, const std::vector<double>& forward_times,
                            const std::vector<std::size_t>& ascending, Stream& stream);
std::vector<std::size_t> ascending_order(const std::vector<double>& values);

/// Exact draws of the reverse process Y_t = X_{T - t} at increasing reverse times in [0, T].
PathBatch reverse_path_exact(const Target& target, double horizon, const std::vector<double>& eval_times,
                             std::size_t n, Seed seed);

// y' = e^g y + 2 (e^g - 1) s + sqrt(e^{2g} - 1) xi.
Vector exp_integrator_step(const Vector& y, const Vector& s_val, double gamma, Stream& stream);

enum class SamplerInit { standard_gaussian, exact_q_T };

const char* to_string(SamplerInit init);

/// Runs the exponential-integrator chain over the grid; returns the final
/// states, one per column.
Matrix run_sampler(const ScoreOracle& oracle, const TimeGrid& grid, SamplerInit init, std::size_t n, Seed seed);

// sum_k gamma_k |b_k|^2 from the oracle's stored bias (0 for exact oracles).
double score_error_loss_structural(const ScoreOracle& oracle, const TimeGrid& grid);

/// sum_k gamma_k E |score(x, T - t_k) - s(x, T - t_k)|^2 with x ~ q_{T - t_k},
/// estimated by forward sampling with n draws per grid time.
Estimate score_error_loss(const ScoreOracle& oracle, const TimeGrid& grid, std::size_t n, Seed seed);

/// Sample dumps: CSV rows "path,x0,..." or raw little-endian doubles after a
/// one-line text header "n d seed grid_hash".
void write_samples_csv(std::ostream& out, const Matrix& samples);
void write_samples_raw(std::ostream& out, const Matrix& samples, std::uint64_t seed, const std::string& grid_hash);

}  // namespace diffkl
