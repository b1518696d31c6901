#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pcp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for a named sub-stream of a run seed, so e.g. the
/// sampling stream can change without perturbing weight initialization.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return std::mt19937_64(splitmix64(seed ^ splitmix64(h)));
}

}  // namespace pcp
