#pragma once

// Spectral integrator for the conservative stochastic Cahn-Hilliard equation
//   dX = (-nu Lap^2 X - A Lap X + chi Lap(X^3)) dt + sigma_* div dW
// on the unit torus, split as X = Y + Z with Z an exactly integrated
// Ornstein-Uhlenbeck field and Y stepped by exponential Euler (IMEX Euler on request).

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikk/plan.hpp"
#include "ikk/rng.hpp"
#include "ikk/spectral.hpp"
#include "ikk/stats.hpp"

namespace ikk {

// bilaplacian: Z carries -nu Lap^2 only. full_linear: Z carries the whole
// linear symbol nu q^4 - A q^2 on modes where it is positive.
enum class LinearSplit { bilaplacian, full_linear };

// imex: implicit Euler on the stiff symbol, explicit forcing with Z at the
// left endpoint. exponential: exponential Euler with the forcing quadratured
// over the Brownian substeps (Y held at Y_n).
enum class Stepper { imex, exponential };

struct SCHParams {
  double nu = 1.0;
  double A = 0.0;
  double chi = 0.0;
  double sigma_star = 0.0;
  std::int64_t n_modes = 32;  // K: modes |k| <= K on a grid of 2K+1 points
  double dt = 1e-3;
  double T = 0.1;
  double mass = 0.0;
  double noise_dt = 0.0;  // Brownian grid shared across refinements; 0 means dt
  double lambda = 0.0;
  double beta = 0.0;
  LinearSplit split = LinearSplit::bilaplacian;
  Stepper stepper = Stepper::exponential;
  double blowup = 1e6;

  // A = (1 + beta) lambda / 2, chi = lambda beta / 6.
  static SCHParams from_theorem(double lambda, double beta, double nu, double sigma_star_sq) {
    SCHParams p;
    p.lambda = lambda;
    p.beta = beta;
    p.nu = nu;
    p.A = (1.0 + beta) * lambda / 2.0;
    p.chi = lambda * beta / 6.0;
    p.sigma_star = std::sqrt(sigma_star_sq);
    return p;
  }
  static SCHParams from_plan(const ScalingPlan& plan) {
    return from_theorem(plan.lambda_target, plan.beta, plan.nu_limit, plan.sigma_star_sq);
  }
  // Coefficients of the microscopic linearization around magnetization mbar.
  static SCHParams effective(const ScalingPlan& plan, double mbar, bool finite_gamma = false) {
    const auto c = finite_gamma ? effective_coefficients_finite(plan, mbar) : effective_coefficients(plan, mbar);
    SCHParams p;
    p.lambda = plan.lambda_target;
    p.beta = plan.beta;
    p.nu = c.nu;
    p.A = c.A;
    p.chi = c.chi;
    p.sigma_star = std::sqrt(c.sigma_star_sq);
    p.split = LinearSplit::full_linear;
    return p;
  }

  double mapping_defect() const {
    return std::max(std::abs(A - (1.0 + beta) * lambda / 2.0), std::abs(chi - lambda * beta / 6.0));
  }
  std::int64_t grid() const { return 2 * n_modes + 1; }
  std::int64_t steps() const { return std::llround(T / dt); }
  int noise_substeps() const {
    if (noise_dt <= 0.0) return 1;
    const double m = dt / noise_dt;
    const auto r = std::llround(m);
    if (r < 1 || std::abs(m - double(r)) > 1e-9 * m) throw std::invalid_argument("dt must be a multiple of noise_dt");
    return int(r);
  }
  void validate() const {
    if (!(nu >= 0.0)) throw std::invalid_argument("nu must be nonnegative");
    if (!(sigma_star >= 0.0)) throw std::invalid_argument("sigma_* must be nonnegative");
    if (n_modes < 1) throw std::invalid_argument("need at least one mode");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!(T >= 0.0)) throw std::invalid_argument("T must be nonnegative");
    if (std::abs(double(steps()) * dt - T) > 1e-9 * std::max(1.0, T)) throw std::invalid_argument("T must be a multiple of dt");
    noise_substeps();
  }
};

inline double wave(std::int64_t k) { return two_pi * double(k); }

// Full linear decay rate of mode k: nu q^4 - A q^2.
inline double linear_symbol(const SCHParams& p, std::int64_t k) {
  const double q2 = wave(k) * wave(k);
  return p.nu * q2 * q2 - p.A * q2;
}

// Decay rate carried by Z (and treated implicitly in Y).
inline double stiff_symbol(const SCHParams& p, std::int64_t k) {
  const double q2 = wave(k) * wave(k);
  if (p.split == LinearSplit::full_linear) {
    const double l = linear_symbol(p, k);
    if (l > 0.0) return l;
  }
  return p.nu * q2 * q2;
}

struct SCHState {
  SpectralField Y{1}, Z{1};
  double t = 0.0;
  std::uint64_t step = 0;
  SpectralField X() const {
    SpectralField x = Y;
    for (std::size_t i = 0; i < x.coeffs().size(); ++i) x.coeffs()[i] += Z.coeffs()[i];
    return x;
  }
};

struct Diagnostics {
  double t = 0.0;
  double mass = 0.0;  // int X
  double hm1 = 0.0;   // |Y - mean|_{H^-1}
  double h1 = 0.0;    // |grad Y|_{L^2}
  double l4 = 0.0;    // |Y|_{L^4}
  double max_imag = 0.0;
};

class BlowUp : public std::runtime_error {
 public:
  BlowUp(double t, double sup)
      : std::runtime_error("SPDE blow-up guard: |Y|_inf = " + std::to_string(sup) + " at t = " + std::to_string(t)),
        t_(t) {}
  double time() const { return t_; }

 private:
  double t_;
};

// Copy of f with modes |k| <= min(N_f, K) on a grid of 2K+1 points.
inline SpectralField resample(const SpectralField& f, std::int64_t K) {
  SpectralField out(2 * K + 1);
  const std::int64_t m = std::min(K, f.N());
  for (std::int64_t k = -m; k <= m; ++k) out.at(k) = f.at(k);
  return out;
}

// Samples of a degree-K trigonometric polynomial on a grid of 4K+3 points,
// which resolves its cubic and quartic exactly.
inline std::int64_t padded_modes(std::int64_t K) { return 2 * K + 1; }

inline std::vector<double> padded_values(const SpectralField& f) { return idft(resample(f, padded_modes(f.N()))); }

// Dealiased (X^3)^ truncated to the modes of X.
inline SpectralField cubic_hat(const SpectralField& X) {
  auto v = idft(resample(X, padded_modes(X.N())));
  for (auto& x : v) x = x * x * x;
  return resample(dft(v), X.N());
}

inline void enforce_hermitian(SpectralField& f) {
  f.at(0) = cplx(f.at(0).real(), 0.0);
  for (std::int64_t k = 1; k <= f.N(); ++k) f.at(-k) = std::conj(f.at(k));
}

// One exact OU step of length h for the Z modes. Noise is keyed by
// (seed, index, k) so that a coarse step composed of fine steps reuses the
// same increments.
inline void z_step(SpectralField& Z, const SCHParams& p, double h, std::uint64_t seed, std::uint64_t index) {
  if (!(h > 0.0)) throw std::invalid_argument("z_step needs dt > 0");
  for (std::int64_t k = 1; k <= Z.N(); ++k) {
    const double s = stiff_symbol(p, k), q = wave(k);
    const double decay = std::exp(-s * h);
    cplx z = decay * Z.at(k);
    if (p.sigma_star > 0.0) {
      const double var = s > 0.0 ? p.sigma_star * p.sigma_star * q * q * -std::expm1(-2.0 * s * h) / (2.0 * s)
                                 : p.sigma_star * p.sigma_star * q * q * h;
      const auto g = keyed_normal_pair(seed, index, std::uint64_t(k));
      z += std::sqrt(var / 2.0) * cplx(g[0], g[1]);
    }
    Z.at(k) = z;
    Z.at(-k) = std::conj(z);
  }
}

// Stationary E|Z_k|^2 under the bilaplacian split: sigma^2 / (2 nu q^2).
inline double z_stationary_variance(const SCHParams& p, std::int64_t k) {
  const double q = wave(k);
  return p.sigma_star * p.sigma_star * q * q / (2.0 * stiff_symbol(p, k));
}

inline double sup_norm(const SpectralField& f) {
  double m = 0.0;
  for (double v : padded_values(f)) m = std::max(m, std::abs(v));
  return m;
}

// Explicit part of the Y equation: -(L - S)(Y + Z) - chi q^2 (X^3)^.
inline SpectralField explicit_rhs(const SpectralField& Y, const SpectralField& Z, const SCHParams& p) {
  SpectralField X = Y;
  for (std::size_t i = 0; i < X.coeffs().size(); ++i) X.coeffs()[i] += Z.coeffs()[i];
  const SpectralField C = p.chi != 0.0 ? cubic_hat(X) : SpectralField(X.real_space_len());
  SpectralField e(X.real_space_len());
  for (std::int64_t k = 1; k <= X.N(); ++k) {
    const double q2 = wave(k) * wave(k);
    e.at(k) = -(linear_symbol(p, k) - stiff_symbol(p, k)) * X.at(k) - p.chi * q2 * C.at(k);
    e.at(-k) = std::conj(e.at(k));
  }
  return e;
}

inline void check_blowup(const SCHState& s, const SCHParams& p) {
  const double sup = sup_norm(s.Y);
  if (!(sup <= p.blowup)) throw BlowUp(s.t + p.dt, sup);
}

// Y <- (Y + dt E) / (1 + dt S) on modes k != 0, then the blow-up guard.
inline void implicit_update(SCHState& s, const SpectralField& e, const SCHParams& p) {
  for (std::int64_t k = 1; k <= s.Y.N(); ++k) {
    const cplx y = (s.Y.at(k) + p.dt * e.at(k)) / (1.0 + p.dt * stiff_symbol(p, k));
    s.Y.at(k) = y;
    s.Y.at(-k) = std::conj(y);
  }
  check_blowup(s, p);
}

// (1 - e^{-S h}) / S, continuous at S = 0.
inline double phi1(double S, double h) { return S * h > 1e-12 ? -std::expm1(-S * h) / S : h; }

// Exponential Euler step of length dt = m h. Y is held at Y_n; Z advances
// through the m Brownian substeps and each substep's forcing is propagated
// exactly by the stiff semigroup.
inline void exponential_step(SCHState& s, const SCHParams& p, int m, std::uint64_t key, std::uint64_t first) {
  const double h = p.dt / m;
  const SpectralField Y0 = s.Y;
  for (std::int64_t k = 1; k <= s.Y.N(); ++k) s.Y.at(k) *= std::exp(-stiff_symbol(p, k) * p.dt);
  for (int j = 0; j < m; ++j) {
    const auto e = explicit_rhs(Y0, s.Z, p);
    const double rest = p.dt - double(j + 1) * h;
    for (std::int64_t k = 1; k <= s.Y.N(); ++k) {
      const double S = stiff_symbol(p, k);
      s.Y.at(k) += std::exp(-S * rest) * phi1(S, h) * e.at(k);
    }
    z_step(s.Z, p, h, key, first + std::uint64_t(j));
  }
  for (std::int64_t k = 1; k <= s.Y.N(); ++k) s.Y.at(-k) = std::conj(s.Y.at(k));
  check_blowup(s, p);
}

// IMEX Euler step for Y with Z frozen at the left endpoint. Mode 0 is left
// untouched. An optional forcing (spectral, at time t) is added explicitly.
inline void y_step(SCHState& s, const SCHParams& p, const SpectralField* forcing = nullptr) {
  SpectralField e = explicit_rhs(s.Y, s.Z, p);
  if (forcing)
    for (std::int64_t k = 1; k <= e.N(); ++k) {
      e.at(k) += forcing->at(k);
      e.at(-k) = std::conj(e.at(k));
    }
  implicit_update(s, e, p);
}

inline Diagnostics diagnostics(const SCHState& s) {
  Diagnostics d;
  d.t = s.t;
  d.mass = (s.Y.at(0) + s.Z.at(0)).real();
  double hm1 = 0.0, h1 = 0.0;
  for (std::int64_t k = 1; k <= s.Y.N(); ++k) {
    const double q2 = wave(k) * wave(k), a = 2.0 * std::norm(s.Y.at(k));
    hm1 += a / q2;
    h1 += a * q2;
  }
  d.hm1 = std::sqrt(hm1);
  d.h1 = std::sqrt(h1);
  const auto y = padded_values(s.Y);
  double l4 = 0.0;
  for (double v : y) l4 += v * v * v * v;
  d.l4 = std::pow(l4 / double(y.size()), 0.25);
  // imaginary residue of the complex inverse transforms of Y and Z
  for (const SpectralField* f : {&s.Y, &s.Z}) {
    std::vector<cplx> c(f->coeffs().begin(), f->coeffs().end());
    for (const auto& v : fft_backward(c)) d.max_imag = std::max(d.max_imag, std::abs(v.imag()));
  }
  return d;
}

struct SolveOptions {
  std::uint64_t record_every = 0;  // 0: only the initial and final states
  bool diagnostics = true;
  std::uint64_t replica = 0;
};

struct SCHPath {
  std::vector<SCHState> states;
  std::vector<Diagnostics> diagnostics;
  SCHParams params;
  const SCHState& final_state() const { return states.back(); }
};

inline std::uint64_t noise_seed(std::uint64_t seed, std::uint64_t replica) {
  return mix64(seed ^ mix64(replica + 0x5eedULL));
}

// Y(0) = X0, Z(0) = 0. X0 lives on the solver's 2K+1 grid (resampled if not).
inline SCHPath solve(const SCHParams& p, const SpectralField& X0, std::uint64_t seed, const SolveOptions& opt = {}) {
  p.validate();
  if (std::abs(X0.at(0).real() - p.mass) > 1e-12 * std::max(1.0, std::abs(p.mass)))
    throw std::invalid_argument("initial mass differs from the configured mass");
  const int m = p.noise_substeps();
  const double h = p.dt / m;
  const std::uint64_t key = noise_seed(seed, opt.replica);
  SCHState s;
  s.Y = resample(X0, p.n_modes);
  s.Y.at(0) = cplx(p.mass, 0.0);
  enforce_hermitian(s.Y);
  s.Z = SpectralField(p.grid());
  SCHPath path;
  path.params = p;
  path.states.push_back(s);
  if (opt.diagnostics) path.diagnostics.push_back(diagnostics(s));
  const std::uint64_t n = std::uint64_t(p.steps());
  for (std::uint64_t i = 0; i < n; ++i) {
    if (p.stepper == Stepper::exponential) {
      exponential_step(s, p, m, key, i * std::uint64_t(m));
    } else {
      // Y sees Z at the left endpoint; Z advances through the Brownian substeps
      y_step(s, p);
      for (int j = 0; j < m; ++j) z_step(s.Z, p, h, key, i * std::uint64_t(m) + std::uint64_t(j));
    }
    ++s.step;
    s.t = double(s.step) * p.dt;
    if (opt.diagnostics) path.diagnostics.push_back(diagnostics(s));
    if ((opt.record_every > 0 && s.step % opt.record_every == 0) || i + 1 == n) path.states.push_back(s);
  }
  return path;
}

// Real-space X on the 2K+1 grid.
inline std::vector<double> real_field(const SCHState& s) { return idft(s.X()); }

// int (Y - mean Y) X^3, from the dealiased spectral product.
inline double cubic_pairing_spectral(const SpectralField& Y, const SpectralField& Z) {
  SpectralField X = Y;
  for (std::size_t i = 0; i < X.coeffs().size(); ++i) X.coeffs()[i] += Z.coeffs()[i];
  const auto C = cubic_hat(X);
  double s = 0.0;
  for (std::int64_t k = 1; k <= Y.N(); ++k) s += 2.0 * (std::conj(Y.at(k)) * C.at(k)).real();
  return s;
}

// Same pairing by a Riemann sum on a grid `factor` times finer.
inline double cubic_pairing_quadrature(const SpectralField& Y, const SpectralField& Z, int factor = 8) {
  const std::int64_t K = factor * (Y.N() + 1);
  SpectralField Yc = resample(Y, K);
  Yc.at(0) = 0.0;
  const auto y = idft(Yc), z = idft(resample(Z, K)), y0 = idft(resample(Y, K));
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = y0[i] + z[i];
    s += y[i] * x * x * x;
  }
  return s / double(y.size());
}

struct EnergyIdentityReport {
  std::vector<double> t, lhs, rhs, residual;
  double mean_abs_residual = 0.0;
  double max_abs_residual = 0.0;
  // residual against the stated form -lambda A |Y|^2 - lambda chi int Y X^3
  double verbatim_mean_abs_residual = 0.0;
  double scale = 0.0;  // mean |lhs|, for relative reading
  // |sum_n dt_n residual_n| / T: the identity integrated over the run
  double integrated_residual = 0.0;
};

// 1/2 d/dt |Y|^2_{H^-1} + nu |grad Y|^2 = A <PY, X> - chi <PY, X^3>
// for the bilaplacian split, with P removing the mean. The time derivative is
// the forward difference between consecutive recorded states; the other
// terms are taken at the left endpoint.
inline EnergyIdentityReport energy_identity_check(const SCHPath& path, const SCHParams& p) {
  if (p.split != LinearSplit::bilaplacian) throw std::invalid_argument("energy identity needs the bilaplacian split");
  EnergyIdentityReport r;
  if (path.states.size() < 2) return r;
  auto hm1sq = [](const SpectralField& Y) {
    double s = 0.0;
    for (std::int64_t k = 1; k <= Y.N(); ++k) s += 2.0 * std::norm(Y.at(k)) / (wave(k) * wave(k));
    return s;
  };
  double vsum = 0.0;
  for (std::size_t i = 0; i + 1 < path.states.size(); ++i) {
    const auto& a = path.states[i];
    const auto& b = path.states[i + 1];
    const double h = b.t - a.t;
    if (!(h > 0.0)) throw std::invalid_argument("path states must advance in time");
    double h1sq = 0.0, yx = 0.0, l2 = 0.0;
    for (std::int64_t k = 1; k <= a.Y.N(); ++k) {
      const double q2 = wave(k) * wave(k);
      h1sq += 2.0 * q2 * std::norm(a.Y.at(k));
      yx += 2.0 * (std::conj(a.Y.at(k)) * (a.Y.at(k) + a.Z.at(k))).real();
    }
    for (std::int64_t k = -a.Y.N(); k <= a.Y.N(); ++k) l2 += std::norm(a.Y.at(k));
    const SpectralField C = cubic_hat(a.X());
    double cub = 0.0;
    for (std::int64_t k = 1; k <= a.Y.N(); ++k) cub += 2.0 * (std::conj(a.Y.at(k)) * C.at(k)).real();
    const double lhs = 0.5 * (hm1sq(b.Y) - hm1sq(a.Y)) / h + p.nu * h1sq;
    const double rhs = p.A * yx - p.chi * cub;
    r.t.push_back(a.t);
    r.lhs.push_back(lhs);
    r.rhs.push_back(rhs);
    r.residual.push_back(lhs - rhs);
    r.mean_abs_residual += std::abs(lhs - rhs);
    r.integrated_residual += h * (lhs - rhs);
    r.max_abs_residual = std::max(r.max_abs_residual, std::abs(lhs - rhs));
    r.scale += std::abs(lhs);
    const double verbatim = -p.lambda * p.A * l2 - p.lambda * p.chi * (cub + a.Y.at(0).real() * C.at(0).real());
    vsum += std::abs(lhs - verbatim);
  }
  const double n = double(r.t.size());
  r.mean_abs_residual /= n;
  r.scale /= n;
  r.verbatim_mean_abs_residual = vsum / n;
  r.integrated_residual = std::abs(r.integrated_residual) / (path.states.back().t - path.states.front().t);
  return r;
}

struct SelfConvergence {
  std::vector<double> dts;
  std::vector<double> diffs;  // |X_{dt_i} - X_{dt_{i+1}}|_{L^2} at time T
  double order = 0.0;         // least-squares slope of log diff vs log dt
};

// Pathwise temporal self-convergence with the Brownian path fixed on the
// finest grid. dts must be decreasing and each a multiple of the last.
inline SelfConvergence self_convergence(SCHParams p, const SpectralField& X0, std::uint64_t seed,
                                        const std::vector<double>& dts) {
  if (dts.size() < 3) throw std::invalid_argument("self-convergence needs at least three step sizes");
  SelfConvergence r;
  r.dts = dts;
  p.noise_dt = dts.back();
  std::vector<std::vector<double>> finals;
  for (double dt : dts) {
    p.dt = dt;
    finals.push_back(real_field(solve(p, X0, seed, {0, false, 0}).final_state()));
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i + 1 < finals.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < finals[i].size(); ++j) s += std::pow(finals[i][j] - finals[i + 1][j], 2);
    r.diffs.push_back(std::sqrt(s / double(finals[i].size())));
    lx.push_back(std::log(dts[i]));
    ly.push_back(std::log(r.diffs.back()));
  }
  r.order = fit_slope(lx, ly);
  return r;
}

inline void write_diagnostics_csv(std::ostream& os, const std::vector<Diagnostics>& d) {
  os << "t,mass,Hm1,H1,L4\n";
  os.precision(17);
  for (const auto& x : d) os << x.t << ',' << x.mass << ',' << x.hm1 << ',' << x.h1 << ',' << x.l4 << '\n';
}

inline void write_path_csv(std::ostream& os, const SCHPath& path) {
  os << "t,k,re,im\n";
  os.precision(17);
  for (const auto& s : path.states) {
    const auto X = s.X();
    for (std::int64_t k = -X.N(); k <= X.N(); ++k)
      os << s.t << ',' << k << ',' << X.at(k).real() << ',' << X.at(k).imag() << '\n';
  }
}

}  // namespace ikk
