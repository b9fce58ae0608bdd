#include "diffkl/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "diffkl/parallel.hpp"

namespace diffkl {

const char* to_string(PerturbationMode mode) {
    return mode == PerturbationMode::constant_bias ? "constant_bias" : "per_step_bias";
}

const char* to_string(SamplerInit init) {
    return init == SamplerInit::standard_gaussian ? "standard_gaussian" : "exact_q_T";
}

std::string OracleDescriptor::label() const {
    if (!perturbation) return "exact";
    std::ostringstream os;
    os.precision(17);
    os << "perturbed(" << to_string(perturbation->mode) << ",epsilon=" << perturbation->epsilon << ")";
    return os.str();
}

ScoreOracle exact_oracle(std::shared_ptr<const Target> target) {
    if (!target) throw std::invalid_argument("exact_oracle: null target");
    ScoreOracle oracle;
    oracle.dim = target->dim();
    oracle.target = target;
    oracle.evaluate = [target](const Vector& x, double t) { return score(*target, x, t); };
    if (target->is_single_component()) {
        // score = -S^{-1}(x - nu) with S = e^{-2t} C + sigma_t^2 I
        oracle.affine = [target](double t) {
            const auto& c = target->components().front();
            const double decay = std::exp(-t);
            const Vector inv_s = (decay * decay * c.eigenvalues.array() + sigma_sq(t)).inverse();
            AffineForm form;
            form.slope = -(c.basis * inv_s.asDiagonal() * c.basis.transpose());
            form.slope = symmetrized(form.slope);
            form.offset = -form.slope * (decay * c.mean);
            return form;
        };
    }
    return oracle;
}

ScoreOracle exact_oracle(const Target& target) { return exact_oracle(std::make_shared<const Target>(target)); }

std::size_t interval_at_forward_time(const TimeGrid& grid, double t) {
    const auto& r = grid.residuals();
    // first index with r[k] < t, then step back one
    const auto it = std::lower_bound(r.begin(), r.end(), t, [](double a, double b) { return a >= b; });
    const auto first_below = static_cast<std::size_t>(it - r.begin());
    if (first_below == 0) return 0;
    return std::min(first_below - 1, grid.steps() - 1);
}

namespace {

Vector random_unit(std::size_t d, Stream& stream) {
    Vector v(static_cast<Eigen::Index>(d));
    do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = stream.normal();
    } while (v.norm() == 0.0);
    return v / v.norm();
}

}  // namespace

ScoreOracle perturb_oracle(const ScoreOracle& exact, const PerturbationSpec& spec, const TimeGrid& grid) {
    if (!(spec.epsilon >= 0.0) || !std::isfinite(spec.epsilon)) {
        throw std::invalid_argument("perturb_oracle: epsilon must be finite and nonnegative");
    }
    const double length = grid.total_length();
    if (!(length > 0.0)) throw std::invalid_argument("perturb_oracle: grid has zero total length");
    ScoreOracle out = exact;
    out.descriptor.perturbation = spec;
    if (spec.epsilon == 0.0) {
        const auto d = static_cast<Eigen::Index>(exact.dim);
        out.descriptor.bias = [d](double) { return Vector::Zero(d); };
        return out;
    }
    const double magnitude = std::sqrt(spec.epsilon * spec.epsilon / length);
    std::vector<Vector> biases;
    if (spec.mode == PerturbationMode::constant_bias) {
        Stream stream(spec.direction_seed);
        biases.push_back(magnitude * random_unit(exact.dim, stream));
    } else {
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            Stream stream = substream(spec.direction_seed, k);
            biases.push_back(magnitude * random_unit(exact.dim, stream));
        }
    }
    auto shared_biases = std::make_shared<const std::vector<Vector>>(std::move(biases));
    auto shared_grid = std::make_shared<const TimeGrid>(grid);
    auto bias_at = [shared_biases, shared_grid](double t) -> const Vector& {
        if (shared_biases->size() == 1) return shared_biases->front();
        return (*shared_biases)[interval_at_forward_time(*shared_grid, t)];
    };
    out.descriptor.bias = [bias_at](double t) { return Vector(bias_at(t)); };
    auto base = exact.evaluate;
    out.evaluate = [base, bias_at](const Vector& x, double t) { return Vector(base(x, t) + bias_at(t)); };
    if (exact.affine) {
        auto base_affine = exact.affine;
        out.affine = [base_affine, bias_at](double t) {
            AffineForm form = base_affine(t);
            form.offset += bias_at(t);
            return form;
        };
    }
    return out;
}

Matrix forward_sample(const Target& target, double t, std::size_t n, Seed seed) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("forward_sample: t must be finite and >= 0");
    Matrix out(static_cast<Eigen::Index>(target.dim()), static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        Stream stream = substream(seed, i);
        out.col(static_cast<Eigen::Index>(i)) = draw_noisy(target, t, stream);
    });
    return out;
}

std::vector<std::size_t> ascending_order(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    return order;
}

Matrix sample_forward_times(const Target& target, const std::vector<double>& forward_times, Stream& stream) {
    return sample_forward_times(target, forward_times, ascending_order(forward_times), stream);
}

Matrix sample_forward_times(const Target& target, const std::vector<double>& forward_times,
                            const std::vector<std::size_t>& order, Stream& stream) {
    const auto n_times = forward_times.size();
    const auto d = static_cast<Eigen::Index>(target.dim());
    Matrix out(d, static_cast<Eigen::Index>(n_times));
    Vector x = draw(target, stream);
    double current = 0.0;
    for (std::size_t idx : order) {
        const double next = forward_times[idx];
        if (!(next >= 0.0)) throw std::invalid_argument("sample_forward_times: forward times must be >= 0");
        const double h = next - current;
        if (h > 0.0) {
            x *= std::exp(-h);
            const double sd = std::sqrt(sigma_sq(h));
            for (Eigen::Index i = 0; i < d; ++i) x[i] += sd * stream.normal();
            current = next;
        }
        out.col(static_cast<Eigen::Index>(idx)) = x;
    }
    return out;
}

PathBatch reverse_path_exact(const Target& target, double horizon, const std::vector<double>& eval_times,
                             std::size_t n, Seed seed) {
    if (!(horizon > 0.0)) throw std::invalid_argument("reverse_path_exact: horizon must be positive");
    if (eval_times.empty()) throw std::invalid_argument("reverse_path_exact: no evaluation times");
    for (std::size_t k = 0; k < eval_times.size(); ++k) {
        if (!(eval_times[k] >= 0.0 && eval_times[k] <= horizon)) {
            throw std::invalid_argument("reverse_path_exact: evaluation times must lie in [0, T]");
        }
        if (k > 0 && eval_times[k] < eval_times[k - 1]) {
            throw std::invalid_argument("reverse_path_exact: evaluation times must be sorted");
        }
    }
    std::vector<double> forward(eval_times.size());
    for (std::size_t k = 0; k < eval_times.size(); ++k) forward[k] = std::max(0.0, horizon - eval_times[k]);
    PathBatch batch;
    batch.times = eval_times;
    batch.direction = PathDirection::reverse;
    batch.paths.resize(n);
    const auto order = ascending_order(forward);
    parallel_for(n, [&](std::size_t p) {
        Stream stream = substream(seed, p);
        batch.paths[p] = sample_forward_times(target, forward, order, stream);
    });
    return batch;
}

Vector exp_integrator_step(const Vector& y, const Vector& s_val, double gamma, Stream& stream) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("exp_integrator_step: gamma must be > 0");
    if (y.size() != s_val.size()) throw std::invalid_argument("exp_integrator_step: dimension mismatch");
    if (!y.allFinite() || !s_val.allFinite()) throw std::invalid_argument("exp_integrator_step: non-finite input");
    const double growth = std::exp(gamma);
    const double drift = 2.0 * std::expm1(gamma);
    const double sd = std::sqrt(std::expm1(2.0 * gamma));
    Vector out = growth * y + drift * s_val;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sd * stream.normal();
    return out;
}

Matrix run_sampler(const ScoreOracle& oracle, const TimeGrid& grid, SamplerInit init, std::size_t n, Seed seed) {
    if (grid.steps() == 0) throw std::invalid_argument("run_sampler: empty grid");
    if (n == 0) throw std::invalid_argument("run_sampler: need at least one path");
    if (!oracle.evaluate) throw std::invalid_argument("run_sampler: oracle has no evaluation function");
    if (init == SamplerInit::exact_q_T && !oracle.target) {
        throw std::invalid_argument("run_sampler: exact q_T start needs a target attached to the oracle");
    }
    const auto d = static_cast<Eigen::Index>(oracle.dim);
    Matrix out(d, static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t p) {
        Stream start = substream(seed, p, 0);
        Vector y(d);
        if (init == SamplerInit::exact_q_T) {
            y = draw_noisy(*oracle.target, grid.horizon(), start);
        } else {
            for (Eigen::Index i = 0; i < d; ++i) y[i] = start.normal();
        }
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            Stream step = substream(seed, p, k + 1);
            const Vector s_val = oracle(y, grid.forward_time(k));
            y = exp_integrator_step(y, s_val, grid.gammas()[k], step);
        }
        if (!y.allFinite()) throw std::runtime_error("run_sampler: chain produced non-finite state");
        out.col(static_cast<Eigen::Index>(p)) = y;
    });
    return out;
}

double score_error_loss_structural(const ScoreOracle& oracle, const TimeGrid& grid) {
    if (!oracle.descriptor.bias) return 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        total += grid.gammas()[k] * oracle.descriptor.bias(grid.forward_time(k)).squaredNorm();
    }
    return total;
}

Estimate score_error_loss(const ScoreOracle& oracle, const TimeGrid& grid, std::size_t n, Seed seed) {
    if (!oracle.target) throw std::invalid_argument("score_error_loss: oracle has no attached target");
    if (n < 2) throw std::invalid_argument("score_error_loss: need at least 2 draws");
    std::vector<double> per_draw(n);
    parallel_for(n, [&](std::size_t i) {
        double total = 0.0;
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            Stream stream = substream(seed, i, k);
            const double t = grid.forward_time(k);
            const Vector x = draw_noisy(*oracle.target, t, stream);
            total += grid.gammas()[k] * (score(*oracle.target, x, t) - oracle(x, t)).squaredNorm();
        }
        per_draw[i] = total;
    });
    return mean_estimate(per_draw);
}

void write_samples_csv(std::ostream& out, const Matrix& samples) {
    const auto old_precision = out.precision(17);
    out << "path";
    for (Eigen::Index i = 0; i < samples.rows(); ++i) out << ",x" << i;
    out << '\n';
    for (Eigen::Index p = 0; p < samples.cols(); ++p) {
        out << p;
        for (Eigen::Index i = 0; i < samples.rows(); ++i) out << ',' << samples(i, p);
        out << '\n';
    }
    out.precision(old_precision);
}

void write_samples_raw(std::ostream& out, const Matrix& samples, std::uint64_t seed, const std::string& grid_hash) {
    out << samples.cols() << ' ' << samples.rows() << ' ' << seed << ' ' << grid_hash << '\n';
    for (Eigen::Index p = 0; p < samples.cols(); ++p) {
        for (Eigen::Index i = 0; i < samples.rows(); ++i) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(samples(i, p));
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            char bytes[8];
            std::memcpy(bytes, &bits, 8);
            out.write(bytes, 8);
        }
    }
}

}  // namespace diffkl
