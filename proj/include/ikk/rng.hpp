#pragma once

// Counter-based Philox4x32-10 generator. A stream is keyed by (seed, stream id),
// so every replica (or every noise mode) owns an independent sequence without
// shared state.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace ikk {

class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using counter_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  // Raw bijection: ten rounds over a 128-bit counter under a 64-bit key.
  static counter_type block(key_type key, counter_type ctr) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += W0;
      key[1] += W1;
    }
    return ctr;
  }

  result_type operator()() {
    if (pos_ == 2) refill();
    const std::uint64_t v = (std::uint64_t(buf_[2 * pos_]) << 32) | buf_[2 * pos_ + 1];
    ++pos_;
    return v;
  }

  // Jump to an absolute block index; each block yields two 64-bit outputs.
  void seek(std::uint64_t block_index) {
    counter_ = block_index;
    pos_ = 2;
    has_spare_ = false;
  }

  std::uint64_t blocks_used() const { return counter_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection for exact uniformity.
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = (*this)();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal by Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double th = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

 private:
  void refill() {
    buf_ = block(key_, {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)});
    ++counter_;
    pos_ = 0;
  }

  key_type key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  counter_type buf_{};
  int pos_ = 2;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Pair of independent standard normals addressed by (seed, a, b) alone, used for
// noise that must be reproducible under time-step refinement.
inline std::array<double, 2> keyed_normal_pair(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const auto out = Philox4x32::block(
      {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
       static_cast<std::uint32_t>(b >> 32)});
  const std::uint64_t x = (std::uint64_t(out[0]) << 32) | out[1];
  const std::uint64_t y = (std::uint64_t(out[2]) << 32) | out[3];
  const double u1 = 1.0 - static_cast<double>(x >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(y >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(th), r * std::sin(th)};
}

// SplitMix64 finalizer, used to derive child seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace ikk
