#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "diffkl/linalg.hpp"
#include "diffkl/report.hpp"
#include "diffkl/rng.hpp"
#include "diffkl/sampler.hpp"
#include "diffkl/schedule.hpp"
#include "diffkl/targets.hpp"

namespace diffkl {

/// N(mean, cov) with cov symmetric positive definite.
struct GaussianLaw {
    Vector mean;
    Matrix cov;

    GaussianLaw(Vector mean, Matrix cov);
    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

    static GaussianLaw standard(std::size_t dim);
};

// Law of x_t under the forward process for a Gaussian or point-mass target (t > 0).
GaussianLaw marginal_law(const Target& target, double t);

/// Exact law of the exponential-integrator chain output for an affine oracle.
GaussianLaw propagate_affine_chain(const ScoreOracle& oracle, const TimeGrid& grid, const GaussianLaw& init);

// KL(p || q).
double kl_gaussian(const GaussianLaw& p, const GaussianLaw& q);

struct ForwardKL {
    double exact = 0.0;             // KL(q_T || N(0, I))
    double convexity_bound = 0.0;   // 1/2 {d log sigma_T^{-2} - d + d sigma_T^2 + e^{-2T} E|x_0|^2}
    double bound = 0.0;             // twice the above; -d log(1 - e^{-2T}) when E|x_0|^2 = d
    bool bound_valid = false;       // T >= 1
};

ForwardKL forward_kl(const Target& target, double horizon);

enum class OracleTiming {
    frozen,      // s(Y_{t_k}, T - t_k) on [t_k, t_{k+1}], as in the sampler
    continuous,  // s(Y_t, T - t): isolates the score error from discretization
};

struct GirsanovEstimate {
    Estimate estimate;
    std::size_t n_paths = 0;
    std::size_t quad_points = 0;
    // Relative change of the last interval's integral when its nodes are doubled.
    double refinement_change = 0.0;
};

/**
 * sum_k int_{t_k}^{t_{k+1}} E |grad log q_{T-t}(Y_t) - s(Y_{t_k}, T - t_k)|^2 dt
 * over exact reverse paths, with a composite midpoint rule of quad_points
 * nodes per interval. Standard error is over per-path totals.
 */
GirsanovEstimate girsanov_rhs(const Target& target, const ScoreOracle& oracle, const TimeGrid& grid,
                              std::size_t n_paths, std::size_t quad_points, Seed seed,
                              OracleTiming timing = OracleTiming::frozen);

struct DiscretizationReport {
    GirsanovEstimate estimate;
    double reference = 0.0;  // kappa^2 d N + kappa d T
    double ratio = 0.0;      // estimate / reference
};

DiscretizationReport discretization_error(const Target& target, const TimeGrid& grid, std::size_t n_paths,
                                          std::size_t quad_points, Seed seed);

/// Score-norm and Hessian-Frobenius identities at time t. The lhs is taken
/// from the density route, the rhs from posterior traces.
std::vector<ReportRow> expectation_identities(const Target& target, double t, ExpectationMethod method,
                                              std::size_t budget = 100000, Seed seed = {});

struct BoundReport {
    double score_term = 0.0;      // eps^2
    double disc_quadratic = 0.0;  // kappa^2 d N
    double disc_linear = 0.0;     // kappa d T
    double forward_term = 0.0;    // d e^{-2T}
    double total = 0.0;
};

BoundReport theorem_bound(double eps_sq, double kappa, std::size_t n_steps, double horizon, std::size_t dim);
BoundReport theorem_bound(double eps_sq, const TimeGrid& grid, std::size_t dim);

struct DecompositionReport {
    double kl_q_start = 0.0;   // KL(q_delta || p_{t_N}) started from q_T
    double kl_pi_start = 0.0;  // same, started from N(0, I)
    double forward_term = 0.0; // KL(q_T || N(0, I))
    double slack = 0.0;        // kl_q_start + forward_term - kl_pi_start
    bool holds = false;
};

DecompositionReport kl_decomposition_check(const Target& target, const ScoreOracle& oracle, const TimeGrid& grid,
                                           double tolerance = 1e-12);

// KL(q_delta || p_{t_N}) for an affine oracle and the given start.
double chain_kl(const Target& target, const ScoreOracle& oracle, const TimeGrid& grid, SamplerInit init);

}  // namespace diffkl
