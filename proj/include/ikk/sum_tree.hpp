#pragma once

// Complete binary sum-tree over nonnegative rates: O(log n) update and
// inverse-CDF selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ikk {

class RateIndex {
 public:
  RateIndex() = default;
  explicit RateIndex(std::size_t n) { reset(n); }

  void reset(std::size_t n) {
    n_ = n;
    cap_ = 1;
    while (cap_ < n) cap_ <<= 1;
    tree_.assign(2 * cap_, 0.0);
  }

  std::size_t size() const { return n_; }
  double total() const { return tree_[1]; }
  double rate(std::size_t i) const { return tree_[cap_ + i]; }

  // Parents are recomputed from their children, so every internal node is the
  // exact floating-point sum of its two children after each update.
  void update(std::size_t i, double r) {
    std::size_t p = cap_ + i;
    tree_[p] = r;
    for (p >>= 1; p >= 1; p >>= 1) tree_[p] = tree_[2 * p] + tree_[2 * p + 1];
  }

  void assign(const std::vector<double>& rates) {
    if (rates.size() != n_) reset(rates.size());
    std::fill(tree_.begin(), tree_.end(), 0.0);
    for (std::size_t i = 0; i < n_; ++i) tree_[cap_ + i] = rates[i];
    for (std::size_t p = cap_ - 1; p >= 1; --p) tree_[p] = tree_[2 * p] + tree_[2 * p + 1];
  }

  // Leaf index whose cumulative interval contains u, for u in [0, total).
  std::size_t sample(double u) const {
    std::size_t p = 1;
    while (p < cap_) {
      const double left = tree_[2 * p];
      if (u < left) {
        p = 2 * p;
      } else {
        u -= left;
        p = 2 * p + 1;
      }
    }
    std::size_t i = p - cap_;
    // guard against round-off landing on an empty padding leaf
    while (i >= n_ || tree_[cap_ + i] == 0.0) {
      if (i == 0) throw std::logic_error("rate index is empty");
      --i;
    }
    return i;
  }

  // Largest relative mismatch between an internal node and its children.
  double audit() const {
    double worst = 0.0;
    for (std::size_t p = 1; p < cap_; ++p) {
      const double s = tree_[2 * p] + tree_[2 * p + 1];
      const double scale = std::max(std::abs(s), 1e-300);
      worst = std::max(worst, std::abs(tree_[p] - s) / scale);
    }
    return worst;
  }

 private:
  std::size_t n_ = 0, cap_ = 1;
  std::vector<double> tree_;
};

}  // namespace ikk
