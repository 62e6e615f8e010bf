#pragma once

#include <cstdint>
#include <random>

namespace mphase {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream (a, b) under a root seed. Replication r of grid point g
/// uses stream_seed(seed, g, r), so results do not depend on scheduling.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(root) ^ a) ^ (b * 0xd1342543de82ef95ULL + 1));
}

inline Rng make_rng(std::uint64_t root, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(stream_seed(root, a, b));
}

}  // namespace mphase
