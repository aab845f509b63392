#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace scrhet {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic child seed from a base seed and a list of integer keys,
/// e.g. derive_seed(base, {scenario_id, replicate}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Beta(a, b) draw via two gamma variates.
double beta_draw(Rng& rng, double a, double b);

}  // namespace scrhet
