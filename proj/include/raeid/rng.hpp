#pragma once

#include <cstdint>
#include <random>

namespace raeid {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for stream `index` under `root`: mix64(root ^ mix64(index + 1)).
/// Every parallelizable loop derives per-item generators through this rule so
/// results do not depend on how work is sharded.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Lemire-free simple rejection keeps it unbiased.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Standard normal via Box-Muller, so draws are identical across standard
/// library implementations.
double standard_normal(Rng& rng);

}  // namespace raeid
