#pragma once

#include <cstdint>
#include <initializer_list>

namespace acmg {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a path of indices.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(seed);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return derive_seed(seed, {index});
}

}  // namespace acmg
