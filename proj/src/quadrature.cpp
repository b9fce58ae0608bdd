#include "diffkl/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace diffkl {

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, tol);
}

double integrate_marginal(const Target& target, double t, const std::function<double(double)>& f, double tol) {
    if (target.dim() != 1) throw std::invalid_argument("integrate_marginal: target must be one-dimensional");
    if (!(t > 0.0)) throw std::invalid_argument("integrate_marginal: t must be positive");
    const double decay = std::exp(-t);
    const double var = -std::expm1(-2.0 * t);
    std::vector<double> breaks;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : target.components()) {
        const double centre = decay * c.mean[0];
        const double sd = std::sqrt(decay * decay * c.eigenvalues[0] + var);
        lo = std::min(lo, centre - 12.0 * sd);
        hi = std::max(hi, centre + 12.0 * sd);
        breaks.insert(breaks.end(), {centre - 3.0 * sd, centre, centre + 3.0 * sd});
    }
    breaks.push_back(lo);
    breaks.push_back(hi);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    auto integrand = [&](double x) {
        const Vector point = Vector::Constant(1, x);
        return std::exp(log_density(target, point, t)) * f(x);
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) total += integrate(integrand, breaks[i], breaks[i + 1], tol);
    return total;
}

}  // namespace diffkl
