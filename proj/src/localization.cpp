#include "diffkl/localization.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "diffkl/parallel.hpp"
#include "diffkl/schedule.hpp"

namespace diffkl {

namespace {

std::string indexed(const char* name, Eigen::Index i) { return std::string(name) + "[" + std::to_string(i) + "]"; }

std::string indexed(const char* name, Eigen::Index i, Eigen::Index j) {
    return std::string(name) + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
}

void require_dim(const Target& target, const Vector& u) {
    if (static_cast<std::size_t>(u.size()) != target.dim()) throw std::invalid_argument("observation has wrong dimension");
    if (!u.allFinite()) throw std::invalid_argument("observation must be finite");
}

Vector gaussian_vector(Eigen::Index d, Stream& stream) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = stream.normal();
    return v;
}

MatrixEstimate entrywise_estimate(const std::vector<Matrix>& draws) {
    const auto rows = draws.front().rows();
    const auto cols = draws.front().cols();
    MatrixEstimate out{Matrix(rows, cols), Matrix(rows, cols)};
    std::vector<double> values(draws.size());
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (std::size_t p = 0; p < draws.size(); ++p) values[p] = draws[p](i, j);
            const auto e = mean_estimate(values);
            out.value(i, j) = e.value;
            out.std_err(i, j) = e.std_err;
        }
    }
    return out;
}

}  // namespace

LocalizationPath sl_direct_path(const Target& target, const std::vector<double>& s_grid, std::size_t n, Seed seed) {
    if (s_grid.empty() || s_grid.front() != 0.0) throw std::invalid_argument("sl_direct_path: grid must start at 0");
    for (std::size_t k = 1; k < s_grid.size(); ++k) {
        if (!(s_grid[k] > s_grid[k - 1])) throw std::invalid_argument("sl_direct_path: grid must be increasing");
    }
    const auto d = static_cast<Eigen::Index>(target.dim());
    LocalizationPath out;
    out.s_grid = s_grid;
    out.source = LocalizationSource::direct;
    out.paths.resize(n);
    parallel_for(n, [&](std::size_t p) {
        Stream stream = substream(seed, p);
        const Vector x_star = draw(target, stream);
        Matrix states(d, static_cast<Eigen::Index>(s_grid.size()));
        Vector w = Vector::Zero(d);
        states.col(0).setZero();
        for (std::size_t k = 1; k < s_grid.size(); ++k) {
            w += std::sqrt(s_grid[k] - s_grid[k - 1]) * gaussian_vector(d, stream);
            states.col(static_cast<Eigen::Index>(k)) = s_grid[k] * x_star + w;
        }
        out.paths[p] = std::move(states);
    });
    return out;
}

PosteriorFunctionals sl_drift(const Target& target, const Vector& u, double s) {
    if (!(s > 0.0)) throw std::invalid_argument("sl_drift: s must be positive");
    require_dim(target, u);
    const double t = diffusion_time(s);
    const Vector x = u / (s * std::exp(t));
    auto pm = posterior_moments(target, x, t);
    return {std::move(pm.m), std::move(pm.sigma)};
}

PosteriorFunctionals sl_drift_direct(const Target& target, const Vector& u, double s) {
    if (!(s > 0.0)) throw std::invalid_argument("sl_drift_direct: s must be positive");
    require_dim(target, u);
    // Component j: U ~ N(s mu_j, s^2 C_j + s I); x_* | U is Gaussian with
    // covariance C_j (I + s C_j)^{-1}.
    const auto& comps = target.components();
    const auto& weights = target.weights();
    const auto d = u.size();
    std::vector<Vector> means(comps.size());
    std::vector<Matrix> covs(comps.size());
    std::vector<double> log_joint(comps.size(), -std::numeric_limits<double>::infinity());
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < comps.size(); ++j) {
        const auto& c = comps[j];
        const Vector z = c.basis.transpose() * (u - s * c.mean);
        const Vector shrink = c.eigenvalues.array() / (1.0 + s * c.eigenvalues.array());
        means[j] = c.mean + c.basis * shrink.cwiseProduct(z);
        covs[j] = c.basis * shrink.asDiagonal() * c.basis.transpose();
        if (weights[j] == 0.0) continue;
        double ll = std::log(weights[j]);
        for (Eigen::Index i = 0; i < d; ++i) {
            const double v = s * s * c.eigenvalues[i] + s;
            ll -= 0.5 * (std::log(2.0 * M_PI * v) + z[i] * z[i] / v);
        }
        log_joint[j] = ll;
        max_log = std::max(max_log, ll);
    }
    std::vector<double> resp(comps.size());
    double total = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
        resp[j] = std::exp(log_joint[j] - max_log);
        total += resp[j];
    }
    PosteriorFunctionals out{Vector::Zero(d), Matrix::Zero(d, d)};
    for (std::size_t j = 0; j < comps.size(); ++j) {
        resp[j] /= total;
        out.a += resp[j] * means[j];
        out.A += resp[j] * covs[j];
    }
    for (std::size_t j = 0; j < comps.size(); ++j) {
        const Vector diff = means[j] - out.a;
        out.A += resp[j] * diff * diff.transpose();
    }
    out.A = symmetrized(out.A);
    return out;
}

std::vector<double> atom_posterior_masses(const Target& target, const Vector& u, double s) {
    if (!target.is_atomic()) throw std::invalid_argument("atom_posterior_masses: target must be finitely supported");
    require_dim(target, u);
    const auto& comps = target.components();
    const auto& weights = target.weights();
    std::vector<double> masses(comps.size(), 0.0);
    if (s == 0.0) return weights;
    if (!(s > 0.0)) throw std::invalid_argument("atom_posterior_masses: s must be nonnegative");
    std::vector<double> log_joint(comps.size(), -std::numeric_limits<double>::infinity());
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < comps.size(); ++j) {
        if (weights[j] == 0.0) continue;
        log_joint[j] = std::log(weights[j]) - (u - s * comps[j].mean).squaredNorm() / (2.0 * s);
        max_log = std::max(max_log, log_joint[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
        masses[j] = std::exp(log_joint[j] - max_log);
        total += masses[j];
    }
    for (double& m : masses) m /= total;
    return masses;
}

LocalizationPath sl_sde_path(const Target& target, double s_max, std::size_t n_substeps, std::size_t n, Seed seed,
                             std::size_t record_stride) {
    if (!(s_max > kLocalizationSMin) || !(s_max <= kLocalizationSMax)) {
        throw std::invalid_argument("sl_sde_path: s_max must lie in (1e-4, 1e3]");
    }
    if (n_substeps < 1) throw std::invalid_argument("sl_sde_path: need at least one substep");
    std::vector<double> grid(n_substeps + 1);
    const double log_ratio = std::log(s_max / kLocalizationSMin);
    for (std::size_t k = 0; k <= n_substeps; ++k) {
        grid[k] = kLocalizationSMin * std::exp(log_ratio * static_cast<double>(k) / static_cast<double>(n_substeps));
    }
    grid.front() = kLocalizationSMin;
    grid.back() = s_max;

    std::vector<std::size_t> recorded{0};
    if (record_stride > 0) {
        for (std::size_t k = record_stride; k < n_substeps; k += record_stride) recorded.push_back(k);
    }
    recorded.push_back(n_substeps);

    const auto d = static_cast<Eigen::Index>(target.dim());
    // Single-component targets have drift P_k u + c_k.
    std::vector<Matrix> slopes;
    std::vector<Vector> offsets;
    if (target.is_single_component()) {
        const auto& c = target.components().front();
        for (std::size_t k = 0; k < n_substeps; ++k) {
            const Vector shrink = c.eigenvalues.array() / (1.0 + grid[k] * c.eigenvalues.array());
            Matrix p = c.basis * shrink.asDiagonal() * c.basis.transpose();
            offsets.push_back(c.mean - grid[k] * (p * c.mean));
            slopes.push_back(std::move(p));
        }
    }

    LocalizationPath out;
    out.source = LocalizationSource::sde;
    for (std::size_t k : recorded) out.s_grid.push_back(grid[k]);
    out.paths.resize(n);
    parallel_for(n, [&](std::size_t p) {
        Stream stream = substream(seed, p);
        Matrix states(d, static_cast<Eigen::Index>(recorded.size()));
        Vector u = std::sqrt(kLocalizationSMin) * gaussian_vector(d, stream);
        std::size_t next_record = 0;
        states.col(0) = u;
        ++next_record;
        for (std::size_t k = 0; k < n_substeps; ++k) {
            const double ds = grid[k + 1] - grid[k];
            const Vector drift =
                slopes.empty() ? sl_drift_direct(target, u, grid[k]).a : Vector(slopes[k] * u + offsets[k]);
            u += ds * drift + std::sqrt(ds) * gaussian_vector(d, stream);
            if (next_record < recorded.size() && recorded[next_record] == k + 1) {
                states.col(static_cast<Eigen::Index>(next_record)) = u;
                ++next_record;
            }
        }
        out.paths[p] = std::move(states);
    });
    return out;
}

std::vector<ReportRow> check_localization_equivalence(const Target& target, const std::vector<double>& s_points,
                                                      std::size_t n, Seed seed) {
    if (n < 2) throw std::invalid_argument("check_localization_equivalence: need n >= 2");
    const auto d = static_cast<Eigen::Index>(target.dim());
    std::vector<ReportRow> rows;
    for (std::size_t q = 0; q < s_points.size(); ++q) {
        const double s = s_points[q];
        if (!(s >= 0.0)) throw std::invalid_argument("check_localization_equivalence: s must be positive");
        if (s <= 1e-12) {
            ReportRow row = make_row(s, "all", 0.0, 0.0, 0.0);
            row.skipped = true;
            rows.push_back(row);
            continue;
        }
        const double t = diffusion_time(s);
        const double scale = s * std::exp(t);
        const Seed point_seed = seed.child(q);
        Matrix direct(d, static_cast<Eigen::Index>(n));
        Matrix diffusion(d, static_cast<Eigen::Index>(n));
        parallel_for(n, [&](std::size_t i) {
            const auto col = static_cast<Eigen::Index>(i);
            Stream a = substream(point_seed, i, 0);
            const Vector x_star = draw(target, a);
            direct.col(col) = s * x_star + std::sqrt(s) * gaussian_vector(d, a);
            Stream b = substream(point_seed, i, 1);
            diffusion.col(col) = scale * draw_noisy(target, t, b);
        });
        const Vector mean_direct = direct.rowwise().mean();
        const Vector mean_diffusion = diffusion.rowwise().mean();
        std::vector<double> va(n), vb(n);
        auto estimate_row = [&](const std::string& name, auto&& value_a, auto&& value_b, double correction) {
            for (std::size_t i = 0; i < n; ++i) {
                va[i] = value_a(static_cast<Eigen::Index>(i));
                vb[i] = value_b(static_cast<Eigen::Index>(i));
            }
            const auto ea = mean_estimate(va);
            const auto eb = mean_estimate(vb);
            rows.push_back(make_row(s, name, correction * ea.value, correction * eb.value,
                                    correction * std::hypot(ea.std_err, eb.std_err)));
        };
        for (Eigen::Index i = 0; i < d; ++i) {
            estimate_row(
                indexed("mean", i), [&](Eigen::Index c) { return direct(i, c); },
                [&](Eigen::Index c) { return diffusion(i, c); }, 1.0);
        }
        const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = i; j < d; ++j) {
                estimate_row(
                    indexed("cov", i, j),
                    [&](Eigen::Index c) { return (direct(i, c) - mean_direct[i]) * (direct(j, c) - mean_direct[j]); },
                    [&](Eigen::Index c) {
                        return (diffusion(i, c) - mean_diffusion[i]) * (diffusion(j, c) - mean_diffusion[j]);
                    },
                    unbias);
            }
        }
    }
    return rows;
}

std::vector<ReportRow> check_covariance_ode(const Target& target, const std::vector<double>& t_points, double h,
                                            ExpectationMethod method, std::size_t budget, Seed seed) {
    std::vector<ReportRow> rows;
    const auto d = static_cast<Eigen::Index>(target.dim());
    for (std::size_t q = 0; q < t_points.size(); ++q) {
        const double t = t_points[q];
        if (!(t > 0.0)) throw std::invalid_argument("check_covariance_ode: t must be positive");
        const double step = h > 0.0 ? h : default_ode_step(t);
        const double sigma = std::sqrt(sigma_sq(t));
        const double factor = sigma * sigma * sigma / (2.0 * sigma_dot(t));
        const double s = localization_time(t);
        // dt/ds for t(s) = 1/2 log(1 + 1/s)
        const double dt_ds = -1.0 / (2.0 * s * (s + 1.0));

        if (method == ExpectationMethod::closed_form) {
            const Matrix derivative = expected_sigma_derivative_closed_form(target, t);
            const Matrix square = expected_sigma_sq_closed_form(target, t);
            rows.push_back(make_row(t, "trace", factor * derivative.trace(), square.trace(), 0.0));
            for (Eigen::Index i = 0; i < d; ++i) {
                for (Eigen::Index j = i; j < d; ++j) {
                    rows.push_back(make_row(t, indexed("entry", i, j), factor * derivative(i, j), square(i, j), 0.0));
                }
            }
            rows.push_back(make_row(t, "trace_s_form", dt_ds * derivative.trace(), -square.trace(), 0.0));
            continue;
        }

        if (!(t - step > 0.0)) throw std::invalid_argument("check_covariance_ode: t - h must stay positive");
        const double s_step = step * s;
        const double t_lo = t - step, t_hi = t + step;
        const double ts_lo = diffusion_time(s + s_step), ts_hi = diffusion_time(s - s_step);

        if (method == ExpectationMethod::quadrature) {
            auto trace_at = [&](double tau) {
                return expected_trace_sigma(target, tau, ExpectationMethod::quadrature).value;
            };
            const double square = expected_trace_sigma_sq(target, t, ExpectationMethod::quadrature).value;
            const double dt_deriv = (trace_at(t_hi) - trace_at(t_lo)) / (2.0 * step);
            rows.push_back(make_row(t, "trace", factor * dt_deriv, square, 0.0));
            // ts_lo corresponds to s + s_step
            const double ds_deriv = (trace_at(ts_lo) - trace_at(ts_hi)) / (2.0 * s_step);
            rows.push_back(make_row(t, "trace_s_form", ds_deriv, -square, 0.0));
            continue;
        }

        // Monte Carlo with common random numbers: x_tau = e^{-tau} x_0 + sigma_tau xi for every tau.
        if (budget < 2) throw std::invalid_argument("check_covariance_ode: need budget >= 2");
        std::vector<double> lhs(budget), rhs(budget), diff(budget), lhs_s(budget), diff_s(budget);
        const Seed point_seed = seed.child(q);
        parallel_for(budget, [&](std::size_t i) {
            Stream stream = substream(point_seed, i);
            const Vector x0 = draw(target, stream);
            const Vector xi = gaussian_vector(d, stream);
            auto trace_at = [&](double tau) {
                const Vector x = std::exp(-tau) * x0 + std::sqrt(sigma_sq(tau)) * xi;
                return posterior_moments(target, x, tau).sigma.trace();
            };
            const Vector x = std::exp(-t) * x0 + sigma * xi;
            const double square = posterior_moments(target, x, t).sigma.squaredNorm();
            lhs[i] = factor * (trace_at(t_hi) - trace_at(t_lo)) / (2.0 * step);
            rhs[i] = square;
            diff[i] = lhs[i] - rhs[i];
            lhs_s[i] = (trace_at(ts_lo) - trace_at(ts_hi)) / (2.0 * s_step);
            diff_s[i] = lhs_s[i] + square;
        });
        const auto e_lhs = mean_estimate(lhs), e_rhs = mean_estimate(rhs), e_lhs_s = mean_estimate(lhs_s);
        rows.push_back(make_row(t, "trace", e_lhs.value, e_rhs.value, mean_estimate(diff).std_err));
        rows.push_back(make_row(t, "trace_s_form", e_lhs_s.value, -e_rhs.value, mean_estimate(diff_s).std_err));
    }
    return rows;
}

std::vector<ReportRow> check_density_martingale(const Target& target, const std::vector<double>& s_points,
                                                std::size_t n, Seed seed) {
    if (!target.is_atomic()) throw std::invalid_argument("check_density_martingale: target must be finitely supported");
    if (n < 2) throw std::invalid_argument("check_density_martingale: need n >= 2");
    const auto& weights = target.weights();
    const auto d = static_cast<Eigen::Index>(target.dim());
    std::vector<ReportRow> rows;
    for (std::size_t q = 0; q < s_points.size(); ++q) {
        const double s = s_points[q];
        if (!(s >= 0.0)) throw std::invalid_argument("check_density_martingale: s must be nonnegative");
        if (s == 0.0) {
            // U_0 = 0 carries no information
            for (std::size_t j = 0; j < weights.size(); ++j) {
                rows.push_back(make_row(s, indexed("atom_mass", static_cast<Eigen::Index>(j)), weights[j], weights[j], 0.0));
            }
            continue;
        }
        std::vector<std::vector<double>> masses(weights.size(), std::vector<double>(n));
        const Seed point_seed = seed.child(q);
        parallel_for(n, [&](std::size_t i) {
            Stream stream = substream(point_seed, i);
            const Vector x_star = draw(target, stream);
            const Vector u = s * x_star + std::sqrt(s) * gaussian_vector(d, stream);
            const auto m = atom_posterior_masses(target, u, s);
            for (std::size_t j = 0; j < m.size(); ++j) masses[j][i] = m[j];
        });
        for (std::size_t j = 0; j < weights.size(); ++j) {
            const auto e = mean_estimate(masses[j]);
            rows.push_back(make_row(s, indexed("atom_mass", static_cast<Eigen::Index>(j)), e.value, weights[j],
                                    e.std_err));
        }
    }
    return rows;
}

MatrixEstimate expected_localization_covariance(const Target& target, double s, std::size_t n, Seed seed) {
    if (!(s > 0.0)) throw std::invalid_argument("expected_localization_covariance: s must be positive");
    if (n < 2) throw std::invalid_argument("expected_localization_covariance: need n >= 2");
    const auto d = static_cast<Eigen::Index>(target.dim());
    std::vector<Matrix> draws(n);
    parallel_for(n, [&](std::size_t i) {
        Stream stream = substream(seed, i);
        const Vector x_star = draw(target, stream);
        const Vector u = s * x_star + std::sqrt(s) * gaussian_vector(d, stream);
        draws[i] = sl_drift_direct(target, u, s).A;
    });
    return entrywise_estimate(draws);
}

std::vector<ReportRow> check_second_moment_identity(const Target& target, const std::vector<double>& s_points,
                                                    std::size_t n, Seed seed) {
    if (n < 2) throw std::invalid_argument("check_second_moment_identity: need n >= 2");
    const auto d = static_cast<Eigen::Index>(target.dim());
    const Vector mu = target.mean();
    const Matrix second = target.covariance() + mu * mu.transpose();
    std::vector<ReportRow> rows;
    for (std::size_t q = 0; q < s_points.size(); ++q) {
        const double s = s_points[q];
        if (!(s > 0.0)) throw std::invalid_argument("check_second_moment_identity: s must be positive");
        std::vector<Matrix> cov_draws(n), outer_draws(n), sum_draws(n);
        const Seed point_seed = seed.child(q);
        parallel_for(n, [&](std::size_t i) {
            Stream stream = substream(point_seed, i);
            const Vector x_star = draw(target, stream);
            const Vector u = s * x_star + std::sqrt(s) * gaussian_vector(d, stream);
            const auto f = sl_drift_direct(target, u, s);
            cov_draws[i] = f.A;
            outer_draws[i] = f.a * f.a.transpose();
            sum_draws[i] = f.A + outer_draws[i];
        });
        const auto cov = entrywise_estimate(cov_draws);
        const auto outer = entrywise_estimate(outer_draws);
        const auto sum = entrywise_estimate(sum_draws);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = i; j < d; ++j) {
                rows.push_back(make_row(s, indexed("second_moment", i, j), cov.value(i, j),
                                        second(i, j) - outer.value(i, j), sum.std_err(i, j)));
            }
        }
    }
    return rows;
}

}  // namespace diffkl
