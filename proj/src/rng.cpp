#include "diffkl/linalg.hpp"
#include "diffkl/parallel.hpp"
#include "diffkl/rng.hpp"

#include <atomic>
#include <limits>

namespace diffkl {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {
std::atomic<std::size_t> g_workers{1};
}

std::size_t worker_count() { return g_workers.load(); }

void set_worker_count(std::size_t workers) { g_workers.store(workers == 0 ? 1 : workers); }

double condition_number(const Matrix& symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(symmetric), Eigen::EigenvaluesOnly);
    const Vector ev = eig.eigenvalues().cwiseAbs();
    const double lo = ev.minCoeff();
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return ev.maxCoeff() / lo;
}

}  // namespace diffkl
