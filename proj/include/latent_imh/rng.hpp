#pragma once

#include "latent_imh/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace latent_imh {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/**
 * Stream seed for one chain: splitmix64 applied to the master seed, then
 * mixed with the chain index and the FNV-1a hash of the sampler name.
 *
 *   s = splitmix64(splitmix64(splitmix64(seed) ^ chain) ^ fnv1a(name))
 */
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t chain, std::string_view name) {
  return splitmix64(splitmix64(splitmix64(seed) ^ chain) ^ fnv1a(name));
}

inline Vector standard_normal_vector(Rng& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Metropolis test in the log domain. Non-negative log ratios accept without
/// consuming randomness; otherwise accept iff log(u) < log_ratio.
inline bool metropolis_accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  const double u = uniform01(rng);
  return std::log(u) < log_ratio;
}

}  // namespace latent_imh
