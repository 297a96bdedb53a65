#pragma once

// Fixed-weight bit vectors: enumeration in colexicographic order and the
// matching rank/unrank maps.

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ikk {

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

// All n-bit words with exactly k ones, in increasing (colex) order.
inline std::vector<std::uint32_t> fixed_weight_words(int n, int k) {
  if (n < 0 || n > 31) throw std::invalid_argument("word length must be in [0, 31]");
  std::vector<std::uint32_t> out;
  if (k < 0 || k > n) return out;
  out.reserve(binomial(n, k));
  if (k == 0) {
    out.push_back(0);
    return out;
  }
  std::uint32_t v = (1u << k) - 1u;
  const std::uint32_t limit = 1u << n;
  while (v < limit) {
    out.push_back(v);
    // Gosper's hack: next word with the same popcount
    const std::uint32_t c = v & (0u - v);
    const std::uint32_t r = v + c;
    v = (((r ^ v) >> 2) / c) | r;
  }
  return out;
}

// Colex rank of a fixed-weight word: sum over set bits b_1 < ... < b_k of C(b_j, j).
inline std::uint64_t colex_rank(std::uint32_t word) {
  std::uint64_t r = 0;
  int j = 1;
  for (int b = 0; b < 32; ++b)
    if (word & (1u << b)) r += binomial(b, j++);
  return r;
}

inline std::uint32_t colex_unrank(std::uint64_t rank, int n, int k) {
  std::uint32_t w = 0;
  for (int j = k; j >= 1; --j) {
    int b = j - 1;
    while (b + 1 < n && binomial(b + 1, j) <= rank) ++b;
    rank -= binomial(b, j);
    w |= 1u << b;
  }
  return w;
}

}  // namespace ikk
