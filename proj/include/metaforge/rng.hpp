// SPDX-License-Identifier: Apache-2.0
//
// Seeded randomness helpers. std::mt19937_64 output is fully specified by the
// standard; the distribution adapters below avoid std::uniform_*_distribution,
// whose output differs between standard library implementations. Everything
// downstream of a seed is therefore reproducible across toolchains.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace metaforge {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) with 53 random bits.
inline double rand_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_real(rng);
}

// Uniform index in [0, n). Modulo bias is negligible for n << 2^64 and the
// simple rule keeps the draw identical everywhere.
inline std::size_t rand_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
}

// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> shuffled_indices(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = rand_index(rng, i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace metaforge
