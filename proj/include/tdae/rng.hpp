#pragma once

#include <cstdint>
#include <random>

namespace tdae {

/// splitmix64 finalizer; derives independent stream seeds from (seed, tag) pairs.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic generator. Uniform doubles are derived from raw mt19937_64 output so the
/// stream is identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t next() { return engine_(); }
    /// Uniform integer in [lo, hi].
    std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) { return lo + engine_() % (hi - lo + 1); }

private:
    std::mt19937_64 engine_;
};

}  // namespace tdae
