#pragma once

// Spin configurations on Z/(2N+1), the Kac Hamiltonian, exchange energies and
// heat-bath exchange rates.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikk/kernel.hpp"

namespace ikk {

// F(z) = 1/(1+e^z) and its first two derivatives.
// exp overflow saturates to F = 0, so the plain form is safe.
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(z)); }
inline double logistic_d1(double z) {
  const double f = logistic(z);
  return -f * (1.0 - f);
}
inline double logistic_d2(double z) {
  const double f = logistic(z);
  return f * (1.0 - f) * (1.0 - 2.0 * f);
}

class SpinConfig {
 public:
  static constexpr std::uint64_t kDefaultRefresh = 100000;

  SpinConfig() = default;

  SpinConfig(std::vector<std::int8_t> spins, const KacKernel& kernel) : spins_(std::move(spins)) {
    if (static_cast<std::int64_t>(spins_.size()) != kernel.size())
      throw std::invalid_argument("spin array length differs from kernel ring size");
    for (auto s : spins_)
      if (s != 1 && s != -1) throw std::invalid_argument("spins must be +1 or -1");
    mag_ = 0;
    for (auto s : spins_) mag_ += s;
    refresh(kernel);
  }

  static SpinConfig all_up(const KacKernel& kernel) {
    return SpinConfig(std::vector<std::int8_t>(kernel.size(), 1), kernel);
  }

  std::int64_t size() const { return static_cast<std::int64_t>(spins_.size()); }
  std::int64_t N() const { return (size() - 1) / 2; }
  int spin(std::int64_t i) const { return spins_[wrap(i, size())]; }
  const std::vector<std::int8_t>& spins() const { return spins_; }
  const std::vector<double>& smoothed() const { return field_; }
  double h(std::int64_t i) const { return field_[wrap(i, size())]; }
  std::int64_t total_mag() const { return mag_; }

  bool cache_valid() const { return field_gen_ == spin_gen_; }
  std::uint64_t generation() const { return spin_gen_; }
  std::uint64_t kernel_fingerprint() const { return kernel_fp_; }
  std::uint64_t refresh_every() const { return refresh_every_; }
  void set_refresh_every(std::uint64_t n) { refresh_every_ = n; }

  // Direct spin write: invalidates the smoothed cache until refresh().
  void set_spin(std::int64_t i, int v) {
    if (v != 1 && v != -1) throw std::invalid_argument("spins must be +1 or -1");
    auto& s = spins_[wrap(i, size())];
    mag_ += v - s;
    s = static_cast<std::int8_t>(v);
    ++spin_gen_;
  }

  // Full reconvolution h_i = sum_j kappa(i-j) sigma_j.
  void refresh(const KacKernel& kernel) {
    const std::int64_t n = size(), R = kernel.support();
    const auto& w = kernel.weights();
    field_.assign(n, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::int64_t z = -R; z <= R; ++z) acc += w[z + R] * spins_[wrap(i - z, n)];
      field_[i] = acc;
    }
    kernel_fp_ = kernel.fingerprint();
    field_gen_ = spin_gen_;
    since_refresh_ = 0;
  }

  // Max deviation of the cached field from a fresh reconvolution.
  double cache_drift(const KacKernel& kernel) const {
    SpinConfig copy = *this;
    copy.refresh(kernel);
    double d = 0.0;
    for (std::int64_t i = 0; i < size(); ++i) d = std::max(d, std::abs(copy.field_[i] - field_[i]));
    return d;
  }

  void require_cache(const KacKernel& kernel) const {
    if (!cache_valid()) throw std::logic_error("smoothed field cache is stale");
    if (kernel_fp_ != kernel.fingerprint()) throw std::logic_error("smoothed field built with another kernel");
  }

 private:
  friend void apply_exchange(SpinConfig&, const KacKernel&, std::int64_t);

  std::vector<std::int8_t> spins_;
  std::vector<double> field_;
  std::int64_t mag_ = 0;
  std::uint64_t spin_gen_ = 0, field_gen_ = 0, kernel_fp_ = 0;
  std::uint64_t since_refresh_ = 0, refresh_every_ = kDefaultRefresh;
};

// Brute-force H = -1/2 sum_{i,j} kappa(i-j) sigma_i sigma_j. Oracle use only.
inline double hamiltonian(const SpinConfig& cfg, const KacKernel& kernel) {
  if (cfg.size() != kernel.size()) throw std::invalid_argument("configuration and kernel sizes differ");
  const std::int64_t n = cfg.size(), R = kernel.support();
  double e = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t z = -R; z <= R; ++z) acc += kernel.at_offset(z) * cfg.spin(i - z);
    e += cfg.spin(i) * acc;
  }
  return -0.5 * e;
}

// Self-interaction part of the exchange energy, d^2 (kappa(1) - kappa(0)):
// the field h includes the j = i term, which the swap also moves.
inline double exchange_offset(const KacKernel& kernel) { return kernel.kappa1() - kernel(0); }

// Delta_i H = H(sigma^{i,i+1}) - H(sigma) from the cached field.
inline double exchange_energy(const SpinConfig& cfg, const KacKernel& kernel, std::int64_t i) {
  cfg.require_cache(kernel);
  const int d = cfg.spin(i) - cfg.spin(i + 1);
  if (d == 0) return 0.0;
  return d * (cfg.h(i) - cfg.h(i + 1)) + double(d * d) * exchange_offset(kernel);
}

struct BondLocal {
  int d = 0;
  double delta_H = 0.0;
  double rate = 0.5;
  double current = 0.0;
};

inline BondLocal bond_local(const SpinConfig& cfg, const KacKernel& kernel, double beta, std::int64_t i) {
  if (beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
  BondLocal b;
  b.d = cfg.spin(i) - cfg.spin(i + 1);
  b.delta_H = exchange_energy(cfg, kernel, i);
  b.rate = logistic(beta * b.delta_H);
  b.current = b.d * b.rate;
  return b;
}

// Swap sigma_i and sigma_{i+1}; the field changes by
// d_i [kappa(k-i-1) - kappa(k-i)] on the kernel support only.
inline void apply_exchange(SpinConfig& cfg, const KacKernel& kernel, std::int64_t i) {
  cfg.require_cache(kernel);
  const std::int64_t n = cfg.size();
  const std::int64_t a = wrap(i, n), b = wrap(i + 1, n);
  const int d = cfg.spins_[a] - cfg.spins_[b];
  if (d == 0) return;
  std::swap(cfg.spins_[a], cfg.spins_[b]);
  const std::int64_t R = kernel.support();
  if (2 * R + 2 >= n) {
    for (std::int64_t k = 0; k < n; ++k) cfg.field_[k] += d * (kernel(k - a - 1) - kernel(k - a));
  } else {
    const auto& w = kernel.weights();
    // offsets u = k - a in [-R, R+1]
    std::int64_t k = wrap(a - R, n);
    for (std::int64_t u = -R; u <= R + 1; ++u) {
      const double km1 = (u - 1 >= -R) ? w[u - 1 + R] : 0.0;
      const double k0 = (u <= R) ? w[u + R] : 0.0;
      cfg.field_[k] += d * (km1 - k0);
      if (++k == n) k = 0;
    }
  }
  ++cfg.spin_gen_;
  ++cfg.field_gen_;
  if (++cfg.since_refresh_ >= cfg.refresh_every_ && cfg.refresh_every_ > 0) cfg.refresh(kernel);
}

// Generator applied to sigma_i, evaluated directly as sum over bonds of
// rate times increment, against the discrete continuity equation.
inline double continuity_check(const SpinConfig& cfg, const KacKernel& kernel, double beta) {
  const std::int64_t n = cfg.size();
  std::vector<double> gen(n, 0.0);
  for (std::int64_t b = 0; b < n; ++b) {
    const BondLocal bl = bond_local(cfg, kernel, beta, b);
    // only sites b and b+1 change under the swap
    const std::int64_t s0 = b, s1 = wrap(b + 1, n);
    gen[s0] += bl.rate * (cfg.spin(s1) - cfg.spin(s0));
    gen[s1] += bl.rate * (cfg.spin(s0) - cfg.spin(s1));
  }
  double worst = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double rhs = bond_local(cfg, kernel, beta, i - 1).current - bond_local(cfg, kernel, beta, i).current;
    worst = std::max(worst, std::abs(gen[i] - rhs));
  }
  return worst;
}

// Snapshot format: "KKS1", little-endian u64 site count, one i8 per spin.
inline void save_snapshot(const SpinConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write("KKS1", 4);
  const std::uint64_t n = static_cast<std::uint64_t>(cfg.size());
  std::array<unsigned char, 8> le{};
  for (int b = 0; b < 8; ++b) le[b] = static_cast<unsigned char>(n >> (8 * b));
  out.write(reinterpret_cast<const char*>(le.data()), 8);
  out.write(reinterpret_cast<const char*>(cfg.spins().data()), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline SpinConfig load_snapshot(const std::string& path, const KacKernel& kernel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "KKS1", 4) != 0) throw std::runtime_error("bad snapshot magic in " + path);
  std::array<unsigned char, 8> le{};
  in.read(reinterpret_cast<char*>(le.data()), 8);
  std::uint64_t n = 0;
  for (int b = 0; b < 8; ++b) n |= std::uint64_t(le[b]) << (8 * b);
  if (!in || n % 2 == 0 || n > (1ull << 34)) throw std::runtime_error("bad snapshot length in " + path);
  std::vector<std::int8_t> spins(n);
  in.read(reinterpret_cast<char*>(spins.data()), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("truncated snapshot " + path);
  return SpinConfig(std::move(spins), kernel);
}

}  // namespace ikk
