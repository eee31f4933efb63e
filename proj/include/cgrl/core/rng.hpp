#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "cgrl/core/tensor.hpp"

namespace cgrl {

/// splitmix64 step; used to derive independent named streams from one seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a over the tag, mixed into the master seed. Same (seed, tag) pair
/// always yields the same derived seed.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = master ^ h;
  return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, const std::string& tag, std::uint64_t n) {
  return derive_seed(master, tag + "#" + std::to_string(n));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Uniform(-b, b) init with b = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out,
                             std::vector<std::size_t> shape) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::uninit(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline Tensor standard_normal(std::mt19937_64& rng, std::vector<std::size_t> shape) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t = Tensor::uninit(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace cgrl
