#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace cisfa {

/// The one engine used everywhere. Distribution helpers below are written out
/// by hand because the standard distributions are implementation-defined and
/// the data generator and batch order must be reproducible across toolchains.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection sampling.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Standard normal via Box-Muller (one draw per call, second value discarded).
double normal01(Rng& rng);

/// Fisher-Yates permutation of 0..n-1.
std::vector<int> permutation(Rng& rng, int n);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace cisfa
