#pragma once

// Small summary statistics: means, standard errors, percentile bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ikk/rng.hpp"

namespace ikk {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

inline double variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / double(v.size() - 1);
}

inline std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  return {mean(v), std::sqrt(variance(v) / double(v.size()))};
}

struct Interval {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

// Percentile bootstrap of a statistic over resampled index sets.
inline Interval bootstrap(const std::vector<double>& v, const std::function<double(const std::vector<double>&)>& stat,
                          int resamples = 2000, double level = 0.95, std::uint64_t seed = 0x5eed) {
  if (v.empty()) throw std::invalid_argument("bootstrap of an empty sample");
  Interval out;
  out.estimate = stat(v);
  Philox4x32 g(seed, 0xb007);
  std::vector<double> reps(resamples), buf(v.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& x : buf) x = v[g.below(v.size())];
    reps[r] = stat(buf);
  }
  std::sort(reps.begin(), reps.end());
  const double a = 0.5 * (1.0 - level);
  const auto at = [&](double q) {
    const auto i = std::min<std::size_t>(reps.size() - 1, std::size_t(q * double(reps.size())));
    return reps[i];
  };
  out.lo = at(a);
  out.hi = at(1.0 - a);
  return out;
}

inline double mean_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return v.empty() ? 0.0 : s / double(v.size());
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_slope needs matched samples");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// Kolmogorov-Smirnov distance between two empirical samples.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / double(a.size()) - double(j) / double(b.size())));
  }
  return d;
}

}  // namespace ikk
