#pragma once

#include <cstdint>

namespace cbire {

// Portable deterministic RNG: xoshiro256++ seeded through splitmix64.
// All distribution sampling below is implemented from uniform bits only,
// so identical seeds give identical streams on every platform. Never use
// std::*_distribution here; their output is implementation-defined.
class Rng {
  public:
    Rng() : Rng(0x9e3779b97f4a7c15ull) {}
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    void reseed(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on the open interval (0, 1).
    double uniform01();

    // Uniform on (lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller (two uniforms per call, no caching).
    double normal();

    // Exponential with unit mean.
    double exponential();

    // Poisson count with the given nonnegative mean. Exact in distribution:
    // Knuth multiplication for small means, recursive halving above that.
    std::uint64_t poisson(double mean);

    // Index i drawn with probability weights[i] / sum(weights). Weights must
    // be nonnegative with positive total.
    int categorical(const double* weights, int n);

  private:
    std::uint64_t state_[4];
};

// Stream for path `index` of an ensemble with master seed `seed`.
// Mixing both through splitmix64 decorrelates neighbouring indices, and the
// assignment of streams to paths does not depend on the worker count.
Rng path_stream(std::uint64_t seed, std::uint64_t index);

}  // namespace cbire
