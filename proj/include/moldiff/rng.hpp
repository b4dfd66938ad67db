//
// Copyright 2026 The moldiff project
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLDIFF_RNG_HPP_
#define MOLDIFF_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

#include "moldiff/errors.hpp"

namespace moldiff {

// Deterministic PRNG (xoshiro256++ seeded through splitmix64) with explicit
// distribution implementations, so results are bit-identical across platforms
// and standard-library versions. Every stochastic operation in the toolkit
// takes a seed or an Rng; nothing draws from global state.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  static uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Stable sub-seed derivation: one root seed fans out to named subsystems
  // ("diffusion/sample", "splits/random", ...) plus an index, so adding a new
  // consumer never perturbs the streams of existing ones.
  static uint64_t derive(uint64_t root, std::string_view label, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL ^ root;
    for (char c : label) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    uint64_t x = h;
    return splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of entropy.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); unbiased via rejection sampling.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw numerical_error("uniform_int: n must be positive");
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Draws an index from an unnormalized non-negative weight vector.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw numerical_error("categorical: negative or NaN weight");
      total += w;
    }
    if (total <= 0.0) throw numerical_error("categorical: all weights zero");
    double u = uniform() * total;
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace moldiff

#endif  // MOLDIFF_RNG_HPP_
