#pragma once

// Scaling plan linking the microscopic (gamma, N) to the macroscopic time,
// amplitude and coefficient scales.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ikk/kernel.hpp"
#include "ikk/lattice.hpp"

namespace ikk {

// ratio_locked keeps eps/gamma = r fixed along a gamma sequence; user_exponents
// picks N ~ c gamma^{-p}, which for p > 1 sends eps/gamma to zero.
enum class PlanMode { ratio_locked, user_exponents };

// Lattice spacing: one site per 1/(2N+1) of the torus (default) or 1/N.
enum class EpsConvention { per_site, inverse_N };

inline PlanMode parse_plan_mode(std::string_view s) {
  if (s == "ratio_locked") return PlanMode::ratio_locked;
  if (s == "user_exponents" || s == "vanishing_ratio") return PlanMode::user_exponents;
  throw std::invalid_argument("unknown plan mode: " + std::string(s));
}
inline std::string_view to_string(PlanMode m) {
  return m == PlanMode::ratio_locked ? "ratio_locked" : "user_exponents";
}

struct SpdeCoefficients {
  double nu = 0.0;
  double A = 0.0;
  double chi = 0.0;
  double sigma_star_sq = 0.0;
};

struct ScalingPlan {
  Profile profile = Profile::gaussian;
  PlanMode mode = PlanMode::ratio_locked;
  EpsConvention convention = EpsConvention::per_site;
  double gamma = 0.0;
  std::int64_t N = 0;
  std::int64_t n = 0;  // 2N+1 sites
  double eps = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  double beta = 0.0;
  double lambda_target = 0.0;
  double sigma_star_sq = 0.0;  // target sigma_*^2

  double lambda = 0.0;               // eps^2 / alpha
  double sigma_star_sq_gamma = 0.0;  // eps^3 / (alpha delta^2)
  double kappa1 = 0.0;
  double exchange_offset = 0.0;  // kappa(1) - kappa(0)
  double m2_gamma = 0.0;
  double m2 = 0.0;
  double ratio = 0.0;  // eps / gamma

  // (1/2 - beta kappa1) (m2_gamma / 2) eps^4 / (alpha gamma^2)
  double nu_gamma = 0.0;
  // gamma -> 0 limit of nu_gamma at fixed eps/gamma: lambda m2 r^2 / 4
  double nu_limit = 0.0;
  // the coefficient as stated without the ratio factor: lambda m2 / 4
  double nu_stated = 0.0;
  // (1 + beta) lambda / 2 and lambda beta / 6
  double A = 0.0;
  double chi = 0.0;
  // A'_gamma = (1/2 - beta kappa1) lambda_gamma
  double A_prime_gamma = 0.0;

  double macro_to_micro(double t_macro) const { return t_macro / alpha; }

  // Scaling-regime ratios: eps/gamma and gamma eps^3/(alpha delta^2).
  double ratio_eps_gamma() const { return eps / gamma; }
  double ratio_gamma_sigma() const { return gamma * sigma_star_sq_gamma; }

  // Coefficients of the limiting equation under the stated mapping.
  SpdeCoefficients theorem_coefficients() const { return {nu_limit, A, chi, sigma_star_sq}; }
};

inline ScalingPlan make_plan(const KacKernel& kernel, double lambda_target, double sigma_star_sq, double beta,
                             PlanMode mode, EpsConvention conv = EpsConvention::per_site) {
  if (!(lambda_target > 0.0)) throw std::invalid_argument("lambda target must be positive");
  if (!(sigma_star_sq > 0.0)) throw std::invalid_argument("sigma_*^2 target must be positive");
  if (beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
  ScalingPlan p;
  p.profile = kernel.profile();
  p.mode = mode;
  p.convention = conv;
  p.gamma = kernel.gamma();
  p.N = kernel.N();
  p.n = kernel.size();
  p.eps = conv == EpsConvention::per_site ? 1.0 / double(p.n) : 1.0 / double(p.N);
  p.beta = beta;
  p.lambda_target = lambda_target;
  p.sigma_star_sq = sigma_star_sq;
  p.alpha = p.eps * p.eps / lambda_target;
  p.delta = std::sqrt(lambda_target * p.eps / sigma_star_sq);
  p.lambda = p.eps * p.eps / p.alpha;
  p.sigma_star_sq_gamma = p.eps * p.eps * p.eps / (p.alpha * p.delta * p.delta);
  p.kappa1 = kernel.kappa1();
  p.exchange_offset = ikk::exchange_offset(kernel);
  p.m2_gamma = kernel.m2_gamma();
  p.m2 = kernel.m2();
  p.ratio = p.eps / p.gamma;
  const double e4 = p.eps * p.eps * p.eps * p.eps;
  p.nu_gamma = (0.5 - beta * p.kappa1) * (p.m2_gamma / 2.0) * e4 / (p.alpha * p.gamma * p.gamma);
  p.nu_limit = p.lambda * p.m2 * p.ratio * p.ratio / 4.0;
  p.nu_stated = p.lambda * p.m2 / 4.0;
  p.A = (1.0 + beta) * p.lambda / 2.0;
  p.chi = p.lambda * beta / 6.0;
  p.A_prime_gamma = (0.5 - beta * p.kappa1) * p.lambda;
  if (!(p.nu_gamma > 0.0) || !std::isfinite(p.nu_gamma))
    throw std::invalid_argument("plan violates positivity: 1/2 - beta kappa(1) must be positive");
  return p;
}

inline ScalingPlan make_plan(Profile profile, double gamma, std::int64_t N, double lambda_target,
                             double sigma_star_sq, double beta, PlanMode mode,
                             EpsConvention conv = EpsConvention::per_site) {
  return make_plan(KacKernel::build(profile, gamma, N), lambda_target, sigma_star_sq, beta, mode, conv);
}

// N such that eps/gamma is closest to r under the per-site convention.
inline std::int64_t n_for_ratio(double gamma, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("ratio must be positive");
  const double n = 1.0 / (r * gamma);
  return std::max<std::int64_t>(2, std::llround((n - 1.0) / 2.0));
}

// N ~ c gamma^{-p}: p = 1 keeps eps/gamma bounded, p > 1 sends it to zero.
inline std::int64_t n_for_exponent(double gamma, double c, double p) {
  return std::max<std::int64_t>(2, std::llround(c * std::pow(gamma, -p)));
}

// Limit of the exact microscopic linearization around a flat profile of
// magnetization mbar, as gamma -> 0 at fixed eps/gamma. In these units the
// rate of mode k is nu (2 pi k)^4 - A (2 pi k)^2 and the cubic coefficient
// carries the amplitude scale delta^2.
inline SpdeCoefficients effective_coefficients(const ScalingPlan& p, double mbar) {
  const double s = 1.0 - mbar * mbar;
  SpdeCoefficients c;
  c.A = -p.lambda * (1.0 - p.beta * s) / 2.0;
  c.nu = p.lambda * p.beta * s * p.m2 * p.ratio * p.ratio / 4.0;
  c.chi = p.lambda * p.beta * p.delta * p.delta / 6.0;
  c.sigma_star_sq = p.sigma_star_sq * s;
  return c;
}

// Same linearization at the plan's finite gamma (kernel moments, kappa(1)).
inline SpdeCoefficients effective_coefficients_finite(const ScalingPlan& p, double mbar) {
  const double s = 1.0 - mbar * mbar;
  const double a = 4.0 * p.beta * p.exchange_offset;
  const double cF = logistic(a);
  const double cF1 = cF * (1.0 - cF);
  SpdeCoefficients c;
  c.A = -p.lambda * (cF - 2.0 * p.beta * s * cF1);
  c.nu = p.lambda * p.beta * s * cF1 * p.m2_gamma * p.ratio * p.ratio;
  c.chi = 2.0 / 3.0 * p.lambda * p.beta * cF1 * p.delta * p.delta;
  c.sigma_star_sq = p.sigma_star_sq_gamma * s * 2.0 * cF;
  return c;
}

inline std::ostream& operator<<(std::ostream& os, const ScalingPlan& p) {
  os << "gamma=" << p.gamma << " N=" << p.N << " eps=" << p.eps << " alpha=" << p.alpha << " delta=" << p.delta
     << " beta=" << p.beta << " lambda=" << p.lambda << " sigma*^2_gamma=" << p.sigma_star_sq_gamma
     << " eps/gamma=" << p.ratio << " nu_gamma=" << p.nu_gamma << " nu_limit=" << p.nu_limit
     << " kappa1=" << p.kappa1;
  return os;
}

}  // namespace ikk
