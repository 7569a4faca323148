#include "cbire/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace cbire {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

void Rng::reseed(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform01() {
    // 53 random bits; +0.5 keeps the value strictly inside (0, 1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

double Rng::exponential() {
    return -std::log(uniform01());
}

std::uint64_t Rng::poisson(double mean) {
    if (!(mean >= 0.0)) throw std::invalid_argument("poisson: negative or NaN mean");
    if (mean == 0.0) return 0;
    if (mean > 1e7) throw std::invalid_argument("poisson: mean too large");
    std::uint64_t total = 0;
    // Halve until Knuth's product method is safe from underflow.
    while (mean > 256.0) {
        const double half = mean * 0.5;
        total += poisson(half);
        mean -= half;
    }
    const double limit = std::exp(-mean);
    double prod = uniform01();
    std::uint64_t k = 0;
    while (prod > limit) {
        ++k;
        prod *= uniform01();
    }
    total += k;
    return total;
}

int Rng::categorical(const double* weights, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += weights[i];
    if (!(total > 0.0)) throw std::invalid_argument("categorical: nonpositive total weight");
    double u = uniform01() * total;
    for (int i = 0; i < n; ++i) {
        u -= weights[i];
        if (u <= 0.0) return i;
    }
    return n - 1;
}

Rng path_stream(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= 0x5851f42d4c957f2dull * (index + 1);
    std::uint64_t b = splitmix64(s);
    return Rng(a ^ rotl(b, 17) ^ (index * 0xda942042e4dd58b5ull));
}

}  // namespace cbire
