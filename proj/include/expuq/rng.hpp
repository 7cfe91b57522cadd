#pragma once

#include <cmath>
#include <cstdint>

#include "expuq/common.hpp"

namespace expuq {

namespace detail {

// SplitMix64 finalizer, used for seeding and for hashing ids into stream ids.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Mixes an arbitrary list of 64-bit ids into a single stream id. Used to
// derive independent substreams, e.g. stream_for(scenario, replicate, chain).
inline std::uint64_t stream_for(std::uint64_t a) {
  std::uint64_t s = a;
  return detail::splitmix64(s);
}

template <typename... Rest>
inline std::uint64_t stream_for(std::uint64_t a, Rest... rest) {
  std::uint64_t s = a ^ (0x9e3779b97f4a7c15ULL * (1 + stream_for(rest...)));
  return detail::splitmix64(s);
}

// Seedable, splittable pseudo-random source. PCG64 (XSL-RR 128/64) with the
// stream id selecting the LCG increment, so distinct stream ids give
// statistically independent sequences and identical (seed, stream_id) pairs
// replay bit-identically. All draw methods are pure functions of the state.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    std::uint64_t s = seed;
    const std::uint64_t hi = detail::splitmix64(s);
    const std::uint64_t lo = detail::splitmix64(s);
    std::uint64_t t = stream_id ^ 0xda3e39cb94b95bdbULL;
    const std::uint64_t inc_hi = detail::splitmix64(t);
    const std::uint64_t inc_lo = detail::splitmix64(t);

    inc_ = ((static_cast<u128>(inc_hi) << 64) | inc_lo) << 1 | 1u;
    state_ = 0u;
    step();
    state_ += (static_cast<u128>(hi) << 64) | lo;
    step();
  }

  // Derives an independent child stream; the child id is mixed with this
  // source's own stream id so nested splits never collide by construction.
  RandomSource split(std::uint64_t child_id) const {
    return RandomSource(seed_, stream_for(stream_id_, child_id));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() {
    const u128 old = state_;
    step();
    const std::uint64_t xored =
        static_cast<std::uint64_t>(old >> 64) ^ static_cast<std::uint64_t>(old);
    const unsigned rot = static_cast<unsigned>(old >> 122);
    return (xored >> rot) | (xored << ((-rot) & 63u));
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in {0, ..., bound-1} (Lemire rejection).
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw InvalidParameterError("uniform_below: bound must be positive");
    const std::uint64_t threshold = (-bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via Box-Muller (cosine branch, no cached spare).
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Exponential with rate 1.
  double exponential() { return -std::log(uniform_pos()); }

  // Gamma(shape, scale) via Marsaglia-Tsang squeeze.
  double gamma(double shape, double scale = 1.0) {
    if (!(shape > 0.0) || !(scale > 0.0))
      throw InvalidParameterError("gamma: shape and scale must be positive");
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

 private:
  using u128 = unsigned __int128;
  static constexpr u128 multiplier() {
    return (static_cast<u128>(0x2360ed051fc65da4ULL) << 64) | 0x4385df649fccf645ULL;
  }
  void step() { state_ = state_ * multiplier() + inc_; }

  u128 state_;
  u128 inc_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
};

}  // namespace expuq
