#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sentfeed {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Substream seeds are a fixed function of
// (master, stream, index), so results never depend on scheduling.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
  return mix_seed(mix_seed(master ^ mix_seed(stream + 0x632BE59BD9B4E019ULL)) + index);
}

inline std::vector<double> standard_normals(Rng& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

inline int rademacher(Rng& rng) { return (rng() >> 63) ? 1 : -1; }

}  // namespace sentfeed
