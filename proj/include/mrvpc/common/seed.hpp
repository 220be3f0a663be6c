#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mrvpc {

// Seed derivation. Every random stream in the project is keyed by
//   derive_seed(master, component, key)
// = splitmix64(splitmix64(master ^ fnv1a(component)) ^ fnv1a(key)).
// Streams for different (component, key) pairs are independent of each other,
// so adding draws to one component never shifts another component's draws.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                    std::string_view key = {}) {
  return splitmix64(splitmix64(master ^ fnv1a(component)) ^ fnv1a(key));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                 std::uint64_t index) {
  return splitmix64(splitmix64(master ^ fnv1a(component)) ^ splitmix64(index));
}

using Rng = std::mt19937_64;

/// Uniform draw in (0, 1]. A threshold test `u <= p` is then never true for p = 0
/// and always true for p = 1.
inline double uniform_open_closed(Rng& rng) {
  return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace mrvpc
