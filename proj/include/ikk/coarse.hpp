#pragma once

// Rescaled Kac field, block averages and the local-equilibrium replacement
// residuals measured along sampled trajectories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikk/kernel.hpp"
#include "ikk/kmc.hpp"
#include "ikk/lattice.hpp"
#include "ikk/plan.hpp"
#include "ikk/stats.hpp"

namespace ikk {

struct FieldSample {
  double t_macro = 0.0;
  std::vector<double> values;  // X(t, eps i) = h_i / delta
  double mass = 0.0;           // eps sum_i X_i
};

inline FieldSample coarse_field(const std::vector<double>& h, const ScalingPlan& plan, double t_macro = 0.0) {
  if (static_cast<std::int64_t>(h.size()) != plan.n) throw std::invalid_argument("field length differs from plan");
  FieldSample s;
  s.t_macro = t_macro;
  s.values.resize(h.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    s.values[i] = h[i] / plan.delta;
    acc += h[i];
  }
  s.mass = plan.eps * acc / plan.delta;
  return s;
}

inline FieldSample coarse_field(const SpinConfig& cfg, const ScalingPlan& plan, double t_macro = 0.0) {
  if (!cfg.cache_valid()) throw std::logic_error("smoothed field cache is stale");
  return coarse_field(cfg.smoothed(), plan, t_macro);
}

// Exact Lipschitz bound |grad_eps X| <= TV(kappa) / (delta eps), and the
// continuum form gamma ||K'||_L1 / (delta eps) it approximates.
inline double gradient_bound(const KacKernel& kernel, const ScalingPlan& plan) {
  return kernel.total_variation() / (plan.delta * plan.eps);
}
inline double gradient_bound_continuum(const KacKernel& kernel, const ScalingPlan& plan) {
  return kernel.gamma() * kernel.profile_deriv_l1() / (plan.delta * plan.eps);
}

inline double max_gradient(const FieldSample& s, double eps) {
  const std::size_t n = s.values.size();
  double g = 0.0;
  for (std::size_t i = 0; i < n; ++i) g = std::max(g, std::abs(s.values[(i + 1) % n] - s.values[i]) / eps);
  return g;
}

inline void check_block(std::int64_t n, std::int64_t ell) {
  if (ell < 0 || 2 * ell + 1 > n) throw std::invalid_argument("block window larger than the lattice");
}

// m_x^ell = (2 ell + 1)^{-1} sum_{|y - x| <= ell} sigma_y, periodic.
inline double block_average(const SpinConfig& cfg, std::int64_t x, std::int64_t ell) {
  check_block(cfg.size(), ell);
  std::int64_t s = 0;
  for (std::int64_t y = x - ell; y <= x + ell; ++y) s += cfg.spin(y);
  return double(s) / double(2 * ell + 1);
}

// Block sums (number of up spins) for every centre, via a sliding window.
inline std::vector<int> block_ups(const std::vector<std::int8_t>& spins, std::int64_t ell) {
  const std::int64_t n = static_cast<std::int64_t>(spins.size());
  check_block(n, ell);
  std::vector<int> ups(n);
  int s = 0;
  for (std::int64_t y = -ell; y <= ell; ++y) s += spins[wrap(y, n)] > 0;
  for (std::int64_t x = 0; x < n; ++x) {
    ups[x] = s;
    s += (spins[wrap(x + ell + 1, n)] > 0) - (spins[wrap(x - ell, n)] > 0);
  }
  return ups;
}

inline std::vector<double> block_averages(const std::vector<std::int8_t>& spins, std::int64_t ell) {
  const auto ups = block_ups(spins, ell);
  std::vector<double> m(ups.size());
  const double w = double(2 * ell + 1);
  for (std::size_t x = 0; x < ups.size(); ++x) m[x] = (2.0 * ups[x] - w) / w;
  return m;
}

// Local-equilibrium table Phi(m) indexed by the number of up spins in the block.
using PhiTable = std::vector<double>;

// Closed form of E[d0^2] under the uniform law on a block sector:
// (2L+1)/L (1 - m^2).
inline PhiTable closed_form_phi_table(std::int64_t ell) {
  const std::int64_t w = 2 * ell + 1;
  PhiTable t(w + 1);
  for (std::int64_t k = 0; k <= w; ++k) {
    const double m = (2.0 * double(k) - double(w)) / double(w);
    t[k] = double(w) / double(ell) * (1.0 - m * m);
  }
  return t;
}

struct BlockScales {
  std::int64_t ell;
  std::int64_t L;
};

// ell = floor(gamma^{-1/2}), L = floor(gamma^{-3/4}).
inline BlockScales default_block_scales(double gamma) {
  return {std::max<std::int64_t>(1, std::int64_t(std::floor(std::pow(gamma, -0.5)))),
          std::max<std::int64_t>(1, std::int64_t(std::floor(std::pow(gamma, -0.75))))};
}

using TestFunction = std::function<double(double)>;

// Per-trajectory time averages (over sample times) of the weighted residuals.
struct ResidualSeries {
  std::vector<double> one_block;  // (1/n) sum_x J(x/n) (d_x^2 - Phi(m_x^ell))
  std::vector<double> two_block;  // (1/n) sum_x J(x/n) (m_x^ell - m_x^L)
  std::vector<double> kac_reg;    // (1/n) sum_x |J| sum_z kappa(x-z) (m_z^L - hbar_L(x))^2
};

inline double one_block_value(const std::vector<std::int8_t>& spins, std::int64_t ell, const PhiTable& phi,
                              const TestFunction& J) {
  const std::int64_t n = static_cast<std::int64_t>(spins.size());
  if (static_cast<std::int64_t>(phi.size()) != 2 * ell + 2) throw std::invalid_argument("Phi table size mismatch");
  const auto ups = block_ups(spins, ell);
  double acc = 0.0;
  for (std::int64_t x = 0; x < n; ++x) {
    const int d = spins[x] - spins[wrap(x + 1, n)];
    acc += J(double(x) / double(n)) * (double(d * d) - phi[ups[x]]);
  }
  return acc / double(n);
}

inline double two_block_value(const std::vector<std::int8_t>& spins, std::int64_t ell, std::int64_t L,
                              const TestFunction& J) {
  const std::int64_t n = static_cast<std::int64_t>(spins.size());
  if (ell == L) return 0.0;
  const auto ml = block_averages(spins, ell), mL = block_averages(spins, L);
  double acc = 0.0;
  for (std::int64_t x = 0; x < n; ++x) acc += J(double(x) / double(n)) * (ml[x] - mL[x]);
  return acc / double(n);
}

inline double kac_regularity_value(const std::vector<std::int8_t>& spins, std::int64_t L, const KacKernel& kernel,
                                   const TestFunction& J) {
  const std::int64_t n = static_cast<std::int64_t>(spins.size());
  const auto mL = block_averages(spins, L);
  const std::int64_t R = kernel.support();
  double acc = 0.0;
  for (std::int64_t x = 0; x < n; ++x) {
    const double wj = std::abs(J(double(x) / double(n)));
    if (wj == 0.0) continue;
    double hbar = 0.0;
    for (std::int64_t z = -R; z <= R; ++z) hbar += kernel.at_offset(z) * mL[wrap(x - z, n)];
    double var = 0.0;
    for (std::int64_t z = -R; z <= R; ++z) {
      const double dz = mL[wrap(x - z, n)] - hbar;
      var += kernel.at_offset(z) * dz * dz;
    }
    acc += wj * var;
  }
  return acc / double(n);
}

struct ResidualEstimate {
  std::string name;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t n_samples = 0;
};

struct ReplacementResiduals {
  ResidualEstimate one_block, two_block, kac_reg;
};

// Time averages of the three residuals over the sampled spin configurations of
// one trajectory. Samples must carry spins (RunOptions::keep_spins).
inline ReplacementResiduals replacement_residuals(const Trajectory& traj, const ScalingPlan& plan,
                                                  const KacKernel& kernel, const TestFunction& J, std::int64_t ell,
                                                  std::int64_t L, const PhiTable& phi) {
  if (L >= plan.N / 4 && L > ell) throw std::invalid_argument("scale separation violated: L >= N/4");
  if (ell > L) throw std::invalid_argument("need ell <= L");
  ResidualSeries s;
  for (const auto& smp : traj.samples) {
    if (smp.spins.empty()) throw std::invalid_argument("trajectory samples carry no spins");
    s.one_block.push_back(one_block_value(smp.spins, ell, phi, J));
    s.two_block.push_back(two_block_value(smp.spins, ell, L, J));
    s.kac_reg.push_back(kac_regularity_value(smp.spins, L, kernel, J));
  }
  auto summarize = [](const char* name, const std::vector<double>& v) {
    const auto ms = mean_stderr(v);
    return ResidualEstimate{name, ms.first, ms.second, v.size()};
  };
  return {summarize("one_block", s.one_block), summarize("two_block", s.two_block),
          summarize("kac_reg", s.kac_reg)};
}

inline ReplacementResiduals replacement_residuals(const Trajectory& traj, const ScalingPlan& plan,
                                                  const KacKernel& kernel, const TestFunction& J, std::int64_t ell,
                                                  std::int64_t L) {
  return replacement_residuals(traj, plan, kernel, J, ell, L, closed_form_phi_table(ell));
}

inline void write_residual_csv_header(std::ostream& os) {
  os << "ell,L,gamma,residual_name,estimate,stderr,n_samples\n";
}
inline void write_residual_csv_row(std::ostream& os, std::int64_t ell, std::int64_t L, double gamma,
                                   const ResidualEstimate& r) {
  os << ell << ',' << L << ',' << gamma << ',' << r.name << ',' << r.estimate << ',' << r.stderr_ << ','
     << r.n_samples << '\n';
}

}  // namespace ikk
