#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "lepus/digest.hpp"

namespace lepus {

using Rng = std::mt19937_64;

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Per-component stream seed: the component name is hashed and mixed with the
// master seed, then with an optional index (round, episode, ...).
inline std::uint64_t DeriveSeed(std::uint64_t master, std::string_view component,
                                std::uint64_t index = 0) {
  std::uint64_t s = SplitMix64(master ^ HashString(component));
  return SplitMix64(s + index * 0xD1B54A32D192ED03ULL);
}

inline Rng MakeRng(std::uint64_t master, std::string_view component,
                   std::uint64_t index = 0) {
  return Rng(DeriveSeed(master, component, index));
}

}  // namespace lepus
