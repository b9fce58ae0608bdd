#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace diffkl {

// Mixes a 64-bit word through the SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Master seed with deterministic derivation of independent child seeds.
///
/// Every stochastic operation receives a Seed and derives one substream per
/// (path, step) pair from it, so results never depend on how paths are
/// scheduled across workers.
struct Seed {
    std::uint64_t value = 0;

    Seed child(std::uint64_t tag) const { return Seed{mix64(value ^ mix64(tag + 0x632be59bd9b4e019ULL))}; }
    Seed child(std::uint64_t a, std::uint64_t b) const { return child(a).child(b); }
};

/// Counter-based generator: output i is mix64(key + i * golden). Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(Seed seed) : key_(seed.value) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        counter_ += 0x9e3779b97f4a7c15ULL;
        return mix64(key_ + counter_);
    }

    double normal() { return normal_(*this); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(*this); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::normal_distribution<double> normal_;
};

inline Stream substream(Seed seed, std::uint64_t path, std::uint64_t step = 0) {
    return Stream(seed.child(path, step));
}

}  // namespace diffkl
