#pragma once

// Deterministic random helpers. std::mt19937_64 is fully specified by the
// standard, but the <random> distributions are not, so uniform/normal draws
// and shuffles are implemented here to make every seeded result reproducible
// across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dynemu {

using rng_engine = std::mt19937_64;

// splitmix64 step; used to derive independent stream seeds from (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(rng_engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform integer on [0, n); n must be positive. Modulo bias is irrelevant
// here (n << 2^64) and the result is the same on every platform.
inline std::uint64_t uniform_below(rng_engine& eng, std::uint64_t n) {
    return eng() % n;
}

// Standard normal via Box-Muller (the cached second value is dropped so the
// draw count per call is fixed).
inline double normal01(rng_engine& eng) {
    double u1 = uniform01(eng);
    double u2 = uniform01(eng);
    while (u1 <= 0.0) u1 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// Fisher-Yates shuffle driven by uniform_below.
template <typename T>
void shuffle(std::vector<T>& v, rng_engine& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(eng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace dynemu
