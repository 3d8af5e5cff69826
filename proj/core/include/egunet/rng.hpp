#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace egu {

using Rng = std::mt19937_64;

// splitmix64 step (Steele, Lea, Flood 2014).  Used as a mixing finalizer when
// deriving independent streams from one root seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a child seed from a root seed, a textual label and an index.  All
// randomness in the project flows from one root seed through this splitter,
// so every stage (scene synthesis, per-block extraction, training batches)
// is reproducible in isolation.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index = 0) {
  // FNV-1a over the label, then two splitmix64 rounds to decorrelate.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = root;
  s ^= splitmix64(h);
  s += index * 0x9e3779b97f4a7c15ULL;
  std::uint64_t out = splitmix64(s);
  out ^= splitmix64(s);
  return out;
}

inline Rng make_rng(std::uint64_t root, std::string_view label,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(root, label, index));
}

// Uniform double in [lo, hi).  Thin wrapper so call sites stay terse.
inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

// Uniform integer in [0, n).
inline int uniform_index(Rng& rng, int n) {
  return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

}  // namespace egu
