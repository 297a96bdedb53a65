#pragma once

// Discretized Kac kernel kappa_gamma(z) = gamma * K(gamma z) on the ring Z/(2N+1).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ikk {

enum class Profile { gaussian, raised_cosine, triangular, custom };

inline std::string_view to_string(Profile p) {
  switch (p) {
    case Profile::gaussian: return "gaussian";
    case Profile::raised_cosine: return "raised_cosine";
    case Profile::triangular: return "triangular";
    case Profile::custom: return "custom";
  }
  return "?";
}

inline Profile parse_profile(std::string_view name) {
  if (name == "gaussian") return Profile::gaussian;
  if (name == "raised_cosine" || name == "cosine") return Profile::raised_cosine;
  if (name == "triangular" || name == "tent") return Profile::triangular;
  throw std::invalid_argument("unsupported kernel profile: " + std::string(name));
}

// Base function K(u), its continuum second moment, sup norm and L1 norm of K'.
struct ProfileInfo {
  double (*value)(double);
  double support;  // K(u) = 0 for |u| > support; infinite for the Gaussian
  double m2;
  double sup;
  double deriv_l1;
};

inline ProfileInfo profile_info(Profile p) {
  using std::numbers::pi;
  switch (p) {
    case Profile::gaussian:
      return {[](double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * pi); },
              std::numeric_limits<double>::infinity(), 1.0, 1.0 / std::sqrt(2.0 * pi),
              2.0 / std::sqrt(2.0 * pi)};
    case Profile::raised_cosine:
      return {[](double u) { return std::abs(u) <= 1.0 ? 0.5 * (1.0 + std::cos(pi * u)) : 0.0; }, 1.0,
              1.0 / 3.0 - 2.0 / (pi * pi), 1.0, 2.0};
    case Profile::triangular:
      return {[](double u) { return std::max(0.0, 1.0 - std::abs(u)); }, 1.0, 1.0 / 6.0, 1.0, 2.0};
    case Profile::custom: break;
  }
  throw std::invalid_argument("unsupported kernel profile");
}

inline std::int64_t wrap(std::int64_t i, std::int64_t n) {
  const std::int64_t r = i % n;
  return r < 0 ? r + n : r;
}

class KacKernel {
 public:
  static constexpr double kTruncation = 1e-12;

  // Weights are sampled on |z| <= R, where R is the last offset with K(gamma z)
  // above kTruncation * max K, then renormalized to unit mass. If 2R+1 exceeds
  // the ring the weights are folded periodically.
  static KacKernel build(Profile profile, double gamma, std::int64_t N) {
    if (!(gamma > 0.0 && gamma < 0.25)) throw std::invalid_argument("gamma must lie in (0, 1/4)");
    if (N < 2) throw std::invalid_argument("N must be at least 2");
    const ProfileInfo info = profile_info(profile);
    const double peak = info.value(0.0);
    std::int64_t R = 0;
    while (info.value(gamma * double(R + 1)) > kTruncation * peak) ++R;

    KacKernel k;
    k.profile_ = profile;
    k.gamma_ = gamma;
    k.N_ = N;
    k.n_ = 2 * N + 1;
    k.raw_support_ = R;
    k.wrapped_ = 2 * R + 1 > k.n_;
    if (k.wrapped_) {
      std::clog << "ikk: kernel support " << R << " exceeds ring of " << k.n_ << " sites; wrapping\n";
    }
    std::vector<double> folded(k.n_, 0.0);
    for (std::int64_t z = -R; z <= R; ++z) folded[wrap(z, k.n_)] += gamma * info.value(gamma * double(z));
    k.R_ = k.wrapped_ ? N : R;
    k.w_.assign(2 * k.R_ + 1, 0.0);
    for (std::int64_t z = -k.R_; z <= k.R_; ++z) k.w_[z + k.R_] = folded[wrap(z, k.n_)];
    // symmetrize exactly before normalizing
    for (std::int64_t z = 1; z <= k.R_; ++z) {
      const double s = 0.5 * (k.w_[k.R_ + z] + k.w_[k.R_ - z]);
      k.w_[k.R_ + z] = k.w_[k.R_ - z] = s;
    }
    k.m2_ = info.m2;
    k.sup_ = info.sup;
    k.deriv_l1_ = info.deriv_l1;
    k.finish();
    return k;
  }

  // Kernel from explicit symmetric weights on offsets -R..R (test fixtures such
  // as the point mass kappa = delta_0). Weights are renormalized.
  static KacKernel custom(std::int64_t N, std::vector<double> weights, double gamma_label = 0.0) {
    if (N < 2) throw std::invalid_argument("N must be at least 2");
    if (weights.size() % 2 != 1) throw std::invalid_argument("custom kernel needs 2R+1 weights");
    KacKernel k;
    k.profile_ = Profile::custom;
    k.gamma_ = gamma_label;
    k.N_ = N;
    k.n_ = 2 * N + 1;
    k.R_ = k.raw_support_ = static_cast<std::int64_t>(weights.size() / 2);
    if (k.R_ > N) throw std::invalid_argument("custom kernel wider than the ring");
    k.w_ = std::move(weights);
    for (double v : k.w_)
      if (v < 0.0) throw std::invalid_argument("kernel weights must be nonnegative");
    k.finish();
    return k;
  }

  Profile profile() const { return profile_; }
  double gamma() const { return gamma_; }
  std::int64_t N() const { return N_; }
  std::int64_t size() const { return n_; }
  // Offsets z with kappa(z) possibly nonzero satisfy |z| <= support().
  std::int64_t support() const { return R_; }
  std::int64_t raw_support() const { return raw_support_; }
  bool wrapped() const { return wrapped_; }

  // kappa(z) for an offset already reduced to [-R, R] or outside it (zero).
  double at_offset(std::int64_t z) const { return (z < -R_ || z > R_) ? 0.0 : w_[z + R_]; }

  // Periodic evaluation for any integer z.
  double operator()(std::int64_t z) const {
    std::int64_t r = wrap(z, n_);
    if (r > N_) r -= n_;
    return at_offset(r);
  }

  const std::vector<double>& weights() const { return w_; }
  double kappa1() const { return (*this)(1); }
  double m2_gamma() const { return m2_gamma_; }
  double m2() const { return m2_; }
  // sum_z |kappa(z+1) - kappa(z)|, the exact Lipschitz constant of the smoothed field.
  double total_variation() const { return tv_; }
  double profile_sup() const { return sup_; }
  double profile_deriv_l1() const { return deriv_l1_; }

  std::uint64_t fingerprint() const { return fp_; }

 private:
  std::uint64_t compute_fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xFF;
        h *= 1099511628211ull;
      }
    };
    mix(static_cast<std::uint64_t>(profile_));
    mix(std::bit_cast<std::uint64_t>(gamma_));
    mix(static_cast<std::uint64_t>(N_));
    for (double v : w_) mix(std::bit_cast<std::uint64_t>(v));
    return h;
  }

  void finish() {
    double mass = 0.0;
    for (double v : w_) mass += v;
    for (double& v : w_) v /= mass;
    double m2g = 0.0, tv = 0.0;
    for (std::int64_t z = -R_; z <= R_; ++z) m2g += double(z) * double(z) * w_[z + R_];
    m2_gamma_ = gamma_ * gamma_ * m2g;
    for (std::int64_t z = -N_; z <= N_; ++z) tv += std::abs((*this)(z + 1) - (*this)(z));
    tv_ = tv;
    fp_ = compute_fingerprint();
  }

  Profile profile_ = Profile::gaussian;
  double gamma_ = 0.0;
  std::int64_t N_ = 0, n_ = 0, R_ = 0, raw_support_ = 0;
  bool wrapped_ = false;
  std::vector<double> w_;
  std::uint64_t fp_ = 0;
  double m2_ = 0.0, m2_gamma_ = 0.0, tv_ = 0.0, sup_ = 0.0, deriv_l1_ = 0.0;
};

}  // namespace ikk
