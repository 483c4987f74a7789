#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace chronocon {

// splitmix64; used to derive independent substream seeds from a user seed
// plus a few stream tags, so parallel workers stay reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a = 0,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  return std::mt19937_64(derive_seed(seed, a, b, c));
}

inline std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 0x9ae16a3b2f90404fULL;
  for (unsigned char ch : s) h = splitmix64(h ^ ch);
  return h;
}

}  // namespace chronocon
