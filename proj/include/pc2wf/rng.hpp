#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pc2wf {

using Rng = std::mt19937_64;

// Derives an independent child seed from a parent seed, a stream tag and an
// index (splitmix64 finaliser over an FNV-1a hash of the tag). Every random
// stream in the library is obtained this way so results do not depend on the
// order in which streams are consumed.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = parent ^ (h + 0x9e3779b97f4a7c15ull * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) {
  return Rng(derive_seed(parent, tag, index));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace pc2wf
