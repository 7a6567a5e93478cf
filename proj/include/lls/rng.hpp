#pragma once

#include <cstdint>
#include <random>

namespace lls {

// splitmix64 step; used to derive independent per-stage seeds from one base seed
// so that adding a stage never perturbs the streams of the others.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace lls
