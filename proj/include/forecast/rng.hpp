#ifndef FORECAST_RNG_HPP
#define FORECAST_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace forecast {

// splitmix64; used to derive independent sub-seeds from one master seed so
// that strategies compared under a single seed see identical batch orders.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Fixed tags for the seed-splitting rule.
namespace seed_tag {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t shuffle = 2;
constexpr std::uint64_t synthetic = 3;
}

// Uniform in [0, 1). Implemented by hand so results do not depend on the
// standard library's distribution internals.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Standard normal via Box-Muller (single value; discards the pair partner to
// keep the consumption pattern simple and deterministic).
inline double normal01(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace forecast

#endif // FORECAST_RNG_HPP
