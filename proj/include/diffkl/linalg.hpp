#pragma once

#include <Eigen/Dense>

namespace diffkl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// Ratio of extreme eigenvalues of a symmetric matrix; infinity when singular.
double condition_number(const Matrix& symmetric);

}  // namespace diffkl
