#pragma once

// Dynkin decomposition of <X, phi> along the exchange dynamics: exact weak
// drift, its Taylor split around the flat-field rate, the closed nonlinear
// drift, and predictable / empirical quadratic variations with exact
// event-interval quadrature.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikk/coarse.hpp"
#include "ikk/gibbs.hpp"
#include "ikk/kmc.hpp"
#include "ikk/lattice.hpp"
#include "ikk/plan.hpp"
#include "ikk/spectral.hpp"

namespace ikk {

using TorusFunction = std::function<double(double)>;

inline std::vector<double> sample_on_lattice(const TorusFunction& phi, std::int64_t n) {
  std::vector<double> v(n);
  for (std::int64_t i = 0; i < n; ++i) v[i] = phi(double(i) / double(n));
  return v;
}

// Unit-mass Kac convolution (K psi)_i = sum_z kappa(z) psi_{i-z}.
template <class T>
std::vector<T> kac_smooth(const std::vector<T>& psi, const KacKernel& kernel) {
  const std::int64_t n = static_cast<std::int64_t>(psi.size());
  if (n != kernel.size()) throw std::invalid_argument("test vector length differs from the ring");
  const std::int64_t R = kernel.support();
  std::vector<T> out(n, T(0));
  for (std::int64_t i = 0; i < n; ++i) {
    T acc(0);
    for (std::int64_t z = -R; z <= R; ++z) acc += kernel.at_offset(z) * psi[wrap(i - z, n)];
    out[i] = acc;
  }
  return out;
}

// The smoothed test function with the extra lattice factor:
// eps sum_j kappa(i-j) phi(eps j), so phi = 1 maps to the constant eps.
inline std::vector<double> smoothed_test(const TorusFunction& phi, const KacKernel& kernel) {
  auto k = kac_smooth(sample_on_lattice(phi, kernel.size()), kernel);
  const double eps = 1.0 / double(kernel.size());
  for (auto& v : k) v *= eps;
  return k;
}

// Forward difference (v_{i+1} - v_i) / eps.
template <class T>
std::vector<T> forward_gradient(const std::vector<T>& v) {
  const std::int64_t n = static_cast<std::int64_t>(v.size());
  std::vector<T> g(n);
  for (std::int64_t i = 0; i < n; ++i) g[i] = (v[wrap(i + 1, n)] - v[i]) * double(n);
  return g;
}

// Weights g_i = grad (K phi)_i entering drift, jumps and brackets.
template <class T>
std::vector<T> test_gradient(const std::vector<T>& phi_lattice, const KacKernel& kernel) {
  return forward_gradient(kac_smooth(phi_lattice, kernel));
}

inline std::vector<cplx> mode_lattice(std::int64_t k, std::int64_t n) {
  std::vector<cplx> v(n);
  for (std::int64_t i = 0; i < n; ++i) v[i] = std::polar(1.0, two_pi * double(k) * double(i) / double(n));
  return v;
}

// <X, psi> = eps sum_i X_i psi_i with X = h / delta.
inline double pair_field(const std::vector<double>& h, const std::vector<double>& psi, const ScalingPlan& plan) {
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * psi[i];
  return plan.eps * s / plan.delta;
}

// Taylor coefficients of F(z) = 1/(1+e^z): F^{(n)} = P_n(F) with
// P_0(x) = x, P_{n+1}(x) = -P_n'(x) x (1 - x).
class LogisticSeries {
 public:
  static constexpr int kTerms = 40;

  static const LogisticSeries& instance() {
    static const LogisticSeries s;
    return s;
  }

  double derivative(int order, double z) const {
    const double f = logistic(z);
    const auto& c = poly_[order];
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * f + *it;
    return acc;
  }

  // sum_{n >= 3} F^{(n)}(a) b^n / n!, the third-order Taylor tail.
  double tail3(double a, double b) const {
    if (std::abs(b) > 1.5) {
      return logistic(a + b) - logistic(a) - logistic_d1(a) * b - 0.5 * logistic_d2(a) * b * b;
    }
    double term = b * b / 2.0, acc = 0.0;
    for (int n = 3; n < kTerms; ++n) {
      term *= b / double(n);
      const double t = derivative(n, a) * term;
      acc += t;
      if (std::abs(term) < 1e-30) break;
    }
    return acc;
  }

 private:
  LogisticSeries() {
    poly_.resize(kTerms);
    poly_[0] = {0.0, 1.0};
    for (int n = 1; n < kTerms; ++n) {
      const auto& p = poly_[n - 1];
      // p'(x) * (x^2 - x)
      std::vector<double> dp(p.size() > 1 ? p.size() - 1 : 1, 0.0);
      for (std::size_t k = 1; k < p.size(); ++k) dp[k - 1] = double(k) * p[k];
      std::vector<double> q(dp.size() + 2, 0.0);
      for (std::size_t k = 0; k < dp.size(); ++k) {
        q[k + 2] += dp[k];
        q[k + 1] -= dp[k];
      }
      poly_[n] = q;
    }
  }
  std::vector<std::vector<double>> poly_;
};

struct DriftCoefficients {
  double A_prime = 0.0;  // (1/2 - beta kappa(1)) lambda
  double nu = 0.0;       // nu_gamma
  double A_second = 0.0; // a0 beta lambda / 4
  double cubic = 0.0;    // beta lambda / 6
};

inline DriftCoefficients drift_coefficients(const ScalingPlan& plan, int L) {
  return {plan.A_prime_gamma, plan.nu_gamma, closure_a0(L) * plan.beta * plan.lambda / 4.0,
          plan.beta * plan.lambda / 6.0};
}

struct DriftReport {
  double total = 0.0;  // alpha^{-1} L <X, phi>, from the exact currents
  double lin = 0.0, nl = 0.0, rem = 0.0;
  double closure = 0.0;        // with the finite-L a0, a2
  double closure_limit = 0.0;  // with a0 = 2, a2 = -2
  double max_bond_defect = 0.0;  // max_i |lin_i + nl_i + rem_i - j_i|
  double rem_ratio = 0.0;        // max_i |rem_i| / (delta eps grad X_i)^2
  int L = 0;
  DriftCoefficients coefficients;
  double split_defect() const { return std::abs(lin + nl + rem - total); }
};

struct BondSplit {
  double current = 0.0, lin = 0.0, nl = 0.0, rem = 0.0;
};

// Taylor split of j_i = d F(a + b) with a = beta d^2 (kappa(1) - kappa(0)),
// b = -beta d (h_{i+1} - h_i).
inline BondSplit split_bond(const SpinConfig& cfg, const KacKernel& kernel, double beta, std::int64_t i) {
  BondSplit s;
  const int d = cfg.spin(i) - cfg.spin(i + 1);
  if (d == 0) return s;
  const double a = beta * double(d * d) * exchange_offset(kernel);
  const double dh = cfg.h(i + 1) - cfg.h(i);  // delta eps grad X
  const double b = -beta * d * dh;
  s.current = d * logistic(beta * exchange_energy(cfg, kernel, i));
  s.lin = d * logistic(a) - beta * logistic_d1(a) * double(d * d) * dh;
  s.nl = 0.5 * beta * beta * logistic_d2(a) * double(d * d * d) * dh * dh;
  s.rem = d * LogisticSeries::instance().tail3(a, b);
  return s;
}

inline DriftReport dynkin_split(const SpinConfig& cfg, const ScalingPlan& plan, const KacKernel& kernel,
                                const std::vector<double>& phi_lattice, int L = 0) {
  cfg.require_cache(kernel);
  if (L <= 0) L = int(default_block_scales(plan.gamma).L);
  const std::int64_t n = cfg.size();
  const auto g = test_gradient(phi_lattice, kernel);
  const double pref = plan.eps * plan.eps / (plan.alpha * plan.delta);
  const double cpref = plan.beta / 4.0 * plan.eps * plan.eps * plan.eps / plan.alpha;
  const double a0 = closure_a0(L), a2 = closure_a2(L), d2 = plan.delta * plan.delta;
  DriftReport r;
  r.L = L;
  r.coefficients = drift_coefficients(plan, L);
  for (std::int64_t i = 0; i < n; ++i) {
    const BondSplit s = split_bond(cfg, kernel, plan.beta, i);
    r.total += pref * s.current * g[i];
    r.lin += pref * s.lin * g[i];
    r.nl += pref * s.nl * g[i];
    r.rem += pref * s.rem * g[i];
    r.max_bond_defect = std::max(r.max_bond_defect, std::abs(s.lin + s.nl + s.rem - s.current));
    const double dh = cfg.h(i + 1) - cfg.h(i);
    if (dh != 0.0) r.rem_ratio = std::max(r.rem_ratio, std::abs(s.rem) / (dh * dh));
    const double X = cfg.h(i) / plan.delta, gradX = dh / (plan.delta * plan.eps);
    r.closure += cpref * (a0 + a2 * d2 * X * X) * gradX * g[i];
    r.closure_limit += cpref * (2.0 - 2.0 * d2 * X * X) * gradX * g[i];
  }
  return r;
}

inline DriftReport dynkin_split(const SpinConfig& cfg, const ScalingPlan& plan, const KacKernel& kernel,
                                const TorusFunction& phi, int L = 0) {
  return dynkin_split(cfg, plan, kernel, sample_on_lattice(phi, cfg.size()), L);
}

// Bonds whose rate can change after a swap at bond b.
inline std::pair<std::int64_t, std::int64_t> affected_bonds(std::int64_t b, std::int64_t n, std::int64_t R) {
  if (2 * R + 3 >= n) return {0, n};
  return {b - R - 1, 2 * R + 3};
}

// Maintains per-bond channel values, their sums, and exact time integrals of
// the sums under piecewise-constant dynamics.
class BondIntegrator {
 public:
  using Eval = std::function<void(const SpinConfig&, std::int64_t, cplx*)>;
  static constexpr std::uint64_t kResumEvery = 1u << 16;

  BondIntegrator() = default;
  BondIntegrator(int channels, Eval eval) : channels_(channels), eval_(std::move(eval)) {}

  void reset(const SpinConfig& cfg) {
    n_ = cfg.size();
    values_.assign(std::size_t(n_) * channels_, cplx(0.0));
    for (std::int64_t i = 0; i < n_; ++i) eval_(cfg, i, &values_[std::size_t(i) * channels_]);
    resum();
    integrals_.assign(channels_, cplx(0.0));
    updates_ = 0;
  }

  void advance(double dtau) {
    for (int c = 0; c < channels_; ++c) integrals_[c] += sums_[c] * dtau;
  }

  void update(const SpinConfig& cfg, std::pair<std::int64_t, std::int64_t> range) {
    std::vector<cplx> fresh(channels_);
    for (std::int64_t u = 0; u < range.second; ++u) {
      const std::int64_t i = wrap(range.first + u, n_);
      eval_(cfg, i, fresh.data());
      cplx* old = &values_[std::size_t(i) * channels_];
      for (int c = 0; c < channels_; ++c) {
        sums_[c] += fresh[c] - old[c];
        old[c] = fresh[c];
      }
    }
    if (++updates_ % kResumEvery == 0) resum();
  }

  const std::vector<cplx>& sums() const { return sums_; }
  const std::vector<cplx>& integrals() const { return integrals_; }
  int channels() const { return channels_; }

 private:
  void resum() {
    sums_.assign(channels_, cplx(0.0));
    for (std::int64_t i = 0; i < n_; ++i)
      for (int c = 0; c < channels_; ++c) sums_[c] += values_[std::size_t(i) * channels_ + c];
  }

  int channels_ = 0;
  Eval eval_;
  std::int64_t n_ = 0;
  std::vector<cplx> values_, sums_, integrals_;
  std::uint64_t updates_ = 0;
};

// Drift, bracket and jump statistics for a family of (complex) test functions
// and chosen cross pairs, driven by a configuration stream.
class MartingaleTracker {
 public:
  MartingaleTracker(const ScalingPlan& plan, const KacKernel& kernel, std::vector<std::vector<cplx>> tests,
                    std::vector<std::pair<int, int>> cross = {})
      : plan_(plan), kernel_(&kernel), cross_(std::move(cross)) {
    for (auto& t : tests) {
      if (static_cast<std::int64_t>(t.size()) != kernel.size()) throw std::invalid_argument("test size mismatch");
      g_.push_back(test_gradient(t, kernel));
      double gmax = 0.0;
      for (const auto& v : g_.back()) gmax = std::max(gmax, std::abs(v));
      gmax_.push_back(gmax);
      psi_.push_back(std::move(t));
    }
    const int T = int(g_.size());
    // channels: per test j g and c d^2 |g|^2, then per pair c d^2 g_a conj(g_b)
    integ_ = BondIntegrator(2 * T + int(cross_.size()), [this, T](const SpinConfig& cfg, std::int64_t i, cplx* out) {
      const int d = cfg.spin(i) - cfg.spin(i + 1);
      const double c = d == 0 ? 0.0 : logistic(plan_.beta * exchange_energy(cfg, *kernel_, i));
      const double j = c * d, w = c * d * d;
      for (int a = 0; a < T; ++a) {
        out[2 * a] = j * g_[a][i];
        out[2 * a + 1] = w * std::norm(g_[a][i]);
      }
      for (std::size_t p = 0; p < cross_.size(); ++p)
        out[2 * T + p] = w * g_[cross_[p].first][i] * std::conj(g_[cross_[p].second][i]);
    });
  }

  void start(const SpinConfig& cfg) {
    integ_.reset(cfg);
    const std::size_t T = g_.size();
    pairing0_.assign(T, cplx(0.0));
    for (std::size_t a = 0; a < T; ++a) pairing0_[a] = pairing(cfg, a);
    pairing_ = pairing0_;
    empirical_.assign(T, 0.0);
    empirical_cross_.assign(cross_.size(), cplx(0.0));
    max_jump_ratio_.assign(T, 0.0);
    jumps_ = 0;
  }

  void interval(double dtau) { integ_.advance(dtau); }

  // After a swap at bond b whose pre-swap gradient was d.
  void jump(const SpinConfig& cfg, std::int64_t b, int d) {
    const std::int64_t n = cfg.size();
    const double scale = plan_.eps * plan_.eps / plan_.delta;
    std::vector<cplx> dm(g_.size());
    for (std::size_t a = 0; a < g_.size(); ++a) {
      dm[a] = scale * double(d) * g_[a][wrap(b, n)];
      pairing_[a] += dm[a];
      empirical_[a] += std::norm(dm[a]);
      if (gmax_[a] > 0.0)
        max_jump_ratio_[a] = std::max(max_jump_ratio_[a], std::abs(dm[a]) / (2.0 * scale * gmax_[a]));
    }
    for (std::size_t p = 0; p < cross_.size(); ++p)
      empirical_cross_[p] += dm[cross_[p].first] * std::conj(dm[cross_[p].second]);
    integ_.update(cfg, affected_bonds(b, n, kernel_->support()));
    ++jumps_;
  }

  // <X, psi_a> recomputed from the configuration.
  cplx pairing(const SpinConfig& cfg, std::size_t a) const {
    cplx s(0.0);
    for (std::int64_t i = 0; i < cfg.size(); ++i) s += cfg.h(i) * psi_[a][i];
    return plan_.eps * s / plan_.delta;
  }

  // Macroscopic-time quantities.
  cplx drift_integral(std::size_t a) const {
    return plan_.eps * plan_.eps / plan_.delta * integ_.integrals()[2 * a];
  }
  double predictable(std::size_t a) const {
    return std::pow(plan_.eps, 4) / (plan_.delta * plan_.delta) * integ_.integrals()[2 * a + 1].real();
  }
  cplx predictable_cross(std::size_t p) const {
    return std::pow(plan_.eps, 4) / (plan_.delta * plan_.delta) * integ_.integrals()[2 * g_.size() + p];
  }
  double empirical(std::size_t a) const { return empirical_[a]; }
  cplx empirical_cross(std::size_t p) const { return empirical_cross_[p]; }
  // M(t) = <X,phi>(t) - <X,phi>(0) - int drift
  cplx martingale(std::size_t a) const { return pairing_[a] - pairing0_[a] - drift_integral(a); }
  cplx tracked_pairing(std::size_t a) const { return pairing_[a]; }
  double max_jump_ratio(std::size_t a) const { return max_jump_ratio_[a]; }
  std::uint64_t jumps() const { return jumps_; }
  std::size_t n_tests() const { return g_.size(); }
  const std::vector<cplx>& gradient(std::size_t a) const { return g_[a]; }

 private:
  ScalingPlan plan_;
  const KacKernel* kernel_;
  std::vector<std::vector<cplx>> psi_, g_;
  std::vector<std::pair<int, int>> cross_;
  BondIntegrator integ_;
  std::vector<cplx> pairing0_, pairing_, empirical_cross_;
  std::vector<double> gmax_, empirical_, max_jump_ratio_;
  std::uint64_t jumps_ = 0;
};

class MartingaleObserver : public Observer {
 public:
  explicit MartingaleObserver(MartingaleTracker& t) : t_(&t) {}
  void on_start(const KawasakiChain& ch) override { t_->start(ch.config()); }
  void on_interval(const KawasakiChain&, double dtau) override { t_->interval(dtau); }
  void on_jump(const KawasakiChain& ch, std::int64_t bond, int d) override { t_->jump(ch.config(), bond, d); }

 private:
  MartingaleTracker* t_;
};

// Re-drives a tracker from a logged event stream (RunOptions::log_events).
inline void replay(const Trajectory& traj, const KacKernel& kernel, SpinConfig cfg, MartingaleTracker& tracker) {
  if (traj.n_events > 0 && traj.events.empty()) throw std::invalid_argument("trajectory has no jump stream");
  if (!cfg.cache_valid()) cfg.refresh(kernel);
  tracker.start(cfg);
  double t = 0.0;
  for (const auto& e : traj.events) {
    tracker.interval(e.t_micro - t);
    t = e.t_micro;
    const int d = cfg.spin(e.bond) - cfg.spin(e.bond + 1);
    if (d == 0) continue;
    apply_exchange(cfg, kernel, e.bond);
    tracker.jump(cfg, e.bond, d);
  }
  tracker.interval(traj.t_end - t);
}

struct BracketReport {
  double predictable = 0.0;
  double empirical = 0.0;
  double target = 0.0;  // sigma_*^2 t int |phi'|^2
  double t = 0.0;
  double max_jump_ratio = 0.0;  // |dM| / (2 eps^2/delta max|g|), at most 1
  double martingale = 0.0;
};

inline double continuum_dirichlet(const TorusFunction& dphi, int quad = 4096) {
  double s = 0.0;
  for (int i = 0; i < quad; ++i) {
    const double v = dphi((i + 0.5) / quad);
    s += v * v;
  }
  return s / quad;
}

// Predictable and empirical brackets of M(phi) from a logged trajectory.
inline BracketReport qv_estimate(const Trajectory& traj, const ScalingPlan& plan, const KacKernel& kernel,
                                 const SpinConfig& cfg0, const TorusFunction& phi, const TorusFunction& dphi) {
  const auto v = sample_on_lattice(phi, kernel.size());
  MartingaleTracker tr(plan, kernel, {std::vector<cplx>(v.begin(), v.end())});
  replay(traj, kernel, cfg0, tr);
  BracketReport r;
  r.t = traj.t_end * plan.alpha;
  r.predictable = tr.predictable(0);
  r.empirical = tr.empirical(0);
  r.target = plan.sigma_star_sq * r.t * continuum_dirichlet(dphi);
  r.max_jump_ratio = tr.max_jump_ratio(0);
  r.martingale = tr.martingale(0).real();
  return r;
}

// sigma_tilde^2 = sigma_*gamma^2 times the site average of c d^2.
inline double sigma_tilde_sq(const SpinConfig& cfg, const KacKernel& kernel, const ScalingPlan& plan) {
  double s = 0.0;
  for (std::int64_t i = 0; i < cfg.size(); ++i) {
    const auto b = bond_local(cfg, kernel, plan.beta, i);
    s += b.rate * b.d * b.d;
  }
  return plan.sigma_star_sq_gamma * s / double(cfg.size());
}

// Equilibrium value at beta = 0: c = 1/2 and E[d^2] on the ring's sector.
inline double sigma_tilde_sq_infinite_temperature(const ScalingPlan& plan, double m) {
  return plan.sigma_star_sq_gamma * 0.5 * d0sq_closed_form(int(plan.N), m);
}

inline double mode_symbol(const KacKernel& kernel, std::int64_t k, double sigma_tilde2) {
  return noise_symbol(kernel, double(k), sigma_tilde2);
}

// Linear-drift bookkeeping along a trajectory.
struct LinearDriftIdentity {
  double lin_integral = 0.0;        // int (eps^2/(alpha delta)) sum_i lin_i g_i dt
  double exact_rhs = 0.0;           // int [lambda F(a) <X, Lap phi> + gradient term] dt
  double exact_residual = 0.0;
  double zeroth_integral = 0.0;     // int (eps^2/(alpha delta)) sum_i d_i F(a) g_i dt
  double zeroth_rhs = 0.0;          // lambda F(a) int <X, Lap phi> dt
  double expanded_rhs = 0.0;        // -A'_gamma int <X, Lap phi> - nu_gamma int <X, Lap^2 phi>
  double expanded_residual = 0.0;   // |zeroth_integral - expanded_rhs|
  double pair_lap = 0.0;            // int <X, Lap phi> dt
  double pair_bilap = 0.0;          // int <X, Lap^2 phi> dt
};

class LinearDriftTracker {
 public:
  LinearDriftTracker(const ScalingPlan& plan, const KacKernel& kernel, const std::vector<double>& phi)
      : plan_(plan), kernel_(&kernel), g_(test_gradient(phi, kernel)) {
    lap_ = laplacian_real(phi);
    bilap_ = laplacian_real(lap_);
    klap_ = kac_smooth(lap_, kernel);
    kbilap_ = kac_smooth(bilap_, kernel);
    const double a = 4.0 * plan.beta * exchange_offset(kernel);
    cF_ = logistic(a);
    cF1_ = -logistic_d1(a);
    integ_ = BondIntegrator(3, [this](const SpinConfig& cfg, std::int64_t i, cplx* out) {
      const BondSplit s = split_bond(cfg, *kernel_, plan_.beta, i);
      const int d = cfg.spin(i) - cfg.spin(i + 1);
      const double dh = cfg.h(i + 1) - cfg.h(i);
      out[0] = s.lin * g_[i];
      out[1] = double(d) * cF_ * g_[i];
      out[2] = plan_.beta * cF1_ * double(d * d) * dh * g_[i];
    });
  }

  void start(const SpinConfig& cfg) {
    integ_.reset(cfg);
    // <X, psi> = (eps/delta) sum_j sigma_j (K psi)_j, updated per swap in O(1)
    pl_ = pb_ = 0.0;
    for (std::int64_t j = 0; j < cfg.size(); ++j) {
      pl_ += cfg.spin(j) * klap_[j];
      pb_ += cfg.spin(j) * kbilap_[j];
    }
    int_pl_ = int_pb_ = 0.0;
  }
  void interval(double dtau) {
    integ_.advance(dtau);
    int_pl_ += pl_ * dtau;
    int_pb_ += pb_ * dtau;
  }
  void jump(const SpinConfig& cfg, std::int64_t b, int d) {
    const std::int64_t n = cfg.size(), i = wrap(b, n), k = wrap(b + 1, n);
    pl_ += d * (klap_[k] - klap_[i]);
    pb_ += d * (kbilap_[k] - kbilap_[i]);
    integ_.update(cfg, affected_bonds(b, n, kernel_->support()));
  }

  LinearDriftIdentity report() const {
    LinearDriftIdentity r;
    const double e = plan_.eps, a = plan_.alpha, dl = plan_.delta;
    // micro-time integrals -> macro time: dt = alpha dtau
    const double pref = e * e / (a * dl) * a;
    r.lin_integral = pref * integ_.integrals()[0].real();
    r.zeroth_integral = pref * integ_.integrals()[1].real();
    r.pair_lap = e / dl * int_pl_ * a;
    r.pair_bilap = e / dl * int_pb_ * a;
    r.zeroth_rhs = plan_.lambda * cF_ * r.pair_lap;
    r.exact_rhs = r.zeroth_rhs + pref * integ_.integrals()[2].real();
    r.exact_residual = std::abs(r.lin_integral - r.exact_rhs);
    r.expanded_rhs = -plan_.A_prime_gamma * r.pair_lap - plan_.nu_gamma * r.pair_bilap;
    r.expanded_residual = std::abs(r.zeroth_integral - r.expanded_rhs);
    return r;
  }

 private:
  ScalingPlan plan_;
  const KacKernel* kernel_;
  std::vector<double> g_, lap_, bilap_, klap_, kbilap_;
  double cF_ = 0.5, cF1_ = 0.25;
  BondIntegrator integ_;
  double pl_ = 0.0, pb_ = 0.0, int_pl_ = 0.0, int_pb_ = 0.0;
};

class LinearDriftObserver : public Observer {
 public:
  explicit LinearDriftObserver(LinearDriftTracker& t) : t_(&t) {}
  void on_start(const KawasakiChain& ch) override { t_->start(ch.config()); }
  void on_interval(const KawasakiChain&, double dtau) override { t_->interval(dtau); }
  void on_jump(const KawasakiChain& ch, std::int64_t bond, int d) override { t_->jump(ch.config(), bond, d); }

 private:
  LinearDriftTracker* t_;
};

inline LinearDriftIdentity linear_drift_identity(const Trajectory& traj, const ScalingPlan& plan,
                                                 const KacKernel& kernel, SpinConfig cfg,
                                                 const TorusFunction& phi) {
  if (traj.n_events > 0 && traj.events.empty()) throw std::invalid_argument("trajectory has no jump stream");
  LinearDriftTracker tr(plan, kernel, sample_on_lattice(phi, kernel.size()));
  if (!cfg.cache_valid()) cfg.refresh(kernel);
  tr.start(cfg);
  double t = 0.0;
  for (const auto& e : traj.events) {
    tr.interval(e.t_micro - t);
    t = e.t_micro;
    const int d = cfg.spin(e.bond) - cfg.spin(e.bond + 1);
    if (d == 0) continue;
    apply_exchange(cfg, kernel, e.bond);
    tr.jump(cfg, e.bond, d);
  }
  tr.interval(traj.t_end - t);
  return tr.report();
}

struct ModeBracket {
  std::int64_t k = 0;
  double estimate = 0.0;  // bracket slope per unit macro time
  double stderr_ = 0.0;
  double analytic = 0.0;  // sigma_tilde^2 |D(k)|^2 |theta(k)|^2
};

inline void write_bracket_csv_header(std::ostream& os) { os << "gamma,phi_name,estimator,value,stderr\n"; }
inline void write_bracket_csv_row(std::ostream& os, double gamma, const std::string& phi_name,
                                  const std::string& estimator, double value, double se) {
  os << gamma << ',' << phi_name << ',' << estimator << ',' << value << ',' << se << '\n';
}

}  // namespace ikk
