#pragma once

#include <functional>

#include "diffkl/targets.hpp"

namespace diffkl {

// Adaptive Gauss-Kronrod integral of f over [a, b] to relative tolerance tol.
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10);

/// Integral of q_t(x) f(x) over the real line for a one-dimensional target.
/// The range covers +-12 marginal standard deviations around every component
/// and is split at component centres so narrow peaks are resolved.
double integrate_marginal(const Target& target, double t, const std::function<double(double)>& f,
                          double tol = 1e-10);

}  // namespace diffkl
