#pragma once

// Exact block Gibbs measures by enumeration: canonical, grand-canonical and
// uniform-on-sector laws, local-equilibrium averages, Dirichlet forms, Fisher
// information and the entropy inequality.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikk/combinatorics.hpp"
#include "ikk/kernel.hpp"
#include "ikk/lattice.hpp"

namespace ikk {

enum class BlockKind { canonical, grand_canonical, auxiliary };

inline std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::canonical: return "canonical";
    case BlockKind::grand_canonical: return "grand_canonical";
    case BlockKind::auxiliary: return "auxiliary";
  }
  return "?";
}

inline constexpr int kMaxBlockSites = 24;

// Block sites u = -ell..ell live at bit u + ell; bit set means spin +1.
inline int block_spin(std::uint32_t word, int ell, int u) { return (word >> (u + ell)) & 1u ? 1 : -1; }

inline std::uint32_t block_swap(std::uint32_t word, int ell, int j) {
  const std::uint32_t a = 1u << (j + ell), b = 1u << (j + 1 + ell);
  const bool x = word & a, y = word & b;
  return x == y ? word : (word ^ (a | b));
}

// H_blk(eta) = -1/2 sum_{u,v in block} kappa(u-v) eta_u eta_v, free boundary.
inline double block_hamiltonian(std::uint32_t word, int ell, const KacKernel& kernel) {
  double e = 0.0;
  for (int u = -ell; u <= ell; ++u)
    for (int v = -ell; v <= ell; ++v)
      e += kernel.at_offset(u - v) * block_spin(word, ell, u) * block_spin(word, ell, v);
  return -0.5 * e;
}

// Heat-bath rate of the internal bond (j, j+1) under the block Hamiltonian.
inline double block_rate(std::uint32_t word, int ell, int j, const KacKernel& kernel, double beta) {
  const double dh = block_hamiltonian(block_swap(word, ell, j), ell, kernel) - block_hamiltonian(word, ell, kernel);
  return logistic(beta * dh);
}

inline int block_ups_for(int ell, double m) {
  const int w = 2 * ell + 1;
  const double k = 0.5 * double(w) * (1.0 + m);
  const int r = int(std::lround(k));
  if (std::abs(k - double(r)) > 1e-9 || r < 0 || r > w) throw std::invalid_argument("magnetization not in the block grid");
  return r;
}

inline double block_m(int ell, int ups) { return (2.0 * ups - (2 * ell + 1)) / double(2 * ell + 1); }

struct BlockMeasure {
  int ell = 0;
  int ups = -1;  // -1 for the grand-canonical law
  double m = 0.0;
  double beta = 0.0;
  BlockKind kind = BlockKind::canonical;
  std::vector<std::uint32_t> configs;
  std::vector<double> weights;
  double Z = 0.0;

  int sites() const { return 2 * ell + 1; }
  std::size_t size() const { return configs.size(); }
  double expect(const std::function<double(std::uint32_t)>& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < configs.size(); ++i) s += weights[i] * f(configs[i]);
    return s;
  }
};

inline void check_block_size(int ell) {
  if (ell < 1 || 2 * ell + 1 > kMaxBlockSites) throw std::invalid_argument("block too large to enumerate");
}

inline BlockMeasure gibbs_on(std::vector<std::uint32_t> configs, int ell, const KacKernel& kernel, double beta,
                             BlockKind kind) {
  BlockMeasure mu;
  mu.ell = ell;
  mu.beta = beta;
  mu.kind = kind;
  mu.configs = std::move(configs);
  mu.weights.resize(mu.configs.size());
  if (mu.configs.empty()) throw std::invalid_argument("empty sector");
  if (kind == BlockKind::auxiliary) {
    mu.Z = double(mu.configs.size());
    std::fill(mu.weights.begin(), mu.weights.end(), 1.0 / mu.Z);
    return mu;
  }
  // shift by the minimum energy for stability; Z reported unshifted
  std::vector<double> e(mu.configs.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = -beta * block_hamiltonian(mu.configs[i], ell, kernel);
  const double top = *std::max_element(e.begin(), e.end());
  double z = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) z += (mu.weights[i] = std::exp(e[i] - top));
  for (auto& w : mu.weights) w /= z;
  mu.Z = z * std::exp(top);
  return mu;
}

inline BlockMeasure enumerate_block(int ell, double m, const KacKernel& kernel, double beta, BlockKind kind) {
  check_block_size(ell);
  if (beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
  const int w = 2 * ell + 1;
  if (kind == BlockKind::grand_canonical) {
    std::vector<std::uint32_t> all(std::size_t(1) << w);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = std::uint32_t(i);
    auto mu = gibbs_on(std::move(all), ell, kernel, beta, kind);
    return mu;
  }
  const int ups = block_ups_for(ell, m);
  auto mu = gibbs_on(fixed_weight_words(w, ups), ell, kernel, beta, kind);
  mu.ups = ups;
  mu.m = block_m(ell, ups);
  return mu;
}

inline BlockMeasure enumerate_sector(int ell, int ups, const KacKernel& kernel, double beta, BlockKind kind) {
  return enumerate_block(ell, block_m(ell, ups), kernel, beta, kind);
}

using BlockObservable = std::function<double(std::uint32_t, int)>;

// d0^2 = (eta_0 - eta_1)^2 on the two central-right sites.
inline double d0_squared(std::uint32_t word, int ell) {
  const int d = block_spin(word, ell, 0) - block_spin(word, ell, 1);
  return double(d * d);
}

inline double phi(int ell, double m, const KacKernel& kernel, double beta, const BlockObservable& psi = d0_squared,
                  BlockKind kind = BlockKind::canonical) {
  const auto mu = enumerate_block(ell, m, kernel, beta, kind);
  return mu.expect([&](std::uint32_t w) { return psi(w, ell); });
}

// Phi(d0^2) for every block sector, indexed by the number of up spins.
inline std::vector<double> phi_table(int ell, const KacKernel& kernel, double beta) {
  std::vector<double> t(2 * ell + 2);
  for (int k = 0; k <= 2 * ell + 1; ++k) t[k] = phi(ell, block_m(ell, k), kernel, beta);
  return t;
}

// (2L+1)/L (1 - m^2)
inline double d0sq_closed_form(int L, double m) {
  if (L < 1) throw std::invalid_argument("L must be positive");
  return double(2 * L + 1) / double(L) * (1.0 - m * m);
}
// c_L(m) = ((2L+1) m^2 - 1) / (2L), the uniform-sector mean of eta_0 eta_1.
inline double two_point(int L, double m) {
  if (L < 1) throw std::invalid_argument("L must be positive");
  return (double(2 * L + 1) * m * m - 1.0) / double(2 * L);
}
// d0sq = a0 + a2 m^2
inline double closure_a0(int L) { return 2.0 + 1.0 / double(L); }
inline double closure_a2(int L) { return -2.0 - 1.0 / double(L); }

inline void require_same_support(const BlockMeasure& a, const BlockMeasure& b) {
  if (a.ell != b.ell || a.configs != b.configs) throw std::invalid_argument("measures live on different sectors");
}

inline double tv_distance(const BlockMeasure& mu, const BlockMeasure& nu) {
  require_same_support(mu, nu);
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += std::abs(mu.weights[i] - nu.weights[i]);
  return 0.5 * s;
}

// Grand-canonical law rebuilt as sum_m (Z_can(m) / Z_gc) mu_can(m).
inline BlockMeasure grand_canonical_mixture(int ell, const KacKernel& kernel, double beta) {
  check_block_size(ell);
  const int w = 2 * ell + 1;
  BlockMeasure out;
  out.ell = ell;
  out.beta = beta;
  out.kind = BlockKind::grand_canonical;
  out.configs.resize(std::size_t(1) << w);
  out.weights.assign(out.configs.size(), 0.0);
  for (std::size_t i = 0; i < out.configs.size(); ++i) out.configs[i] = std::uint32_t(i);
  std::vector<BlockMeasure> sectors;
  double ztot = 0.0;
  for (int k = 0; k <= w; ++k) {
    sectors.push_back(enumerate_sector(ell, k, kernel, beta, BlockKind::canonical));
    ztot += sectors.back().Z;
  }
  for (const auto& s : sectors)
    for (std::size_t i = 0; i < s.size(); ++i) out.weights[s.configs[i]] += s.Z / ztot * s.weights[i];
  out.Z = ztot;
  return out;
}

// Bond (j, j+1) term 1/4 int c (g(eta^{j,j+1}) - g(eta))^2 dmu_gc; g indexed by word.
inline double dirichlet_form_bond(const BlockMeasure& gc, int j, const KacKernel& kernel,
                                  const std::vector<double>& g) {
  if (gc.kind != BlockKind::grand_canonical) throw std::invalid_argument("Dirichlet form is taken under the gc law");
  if (j < -gc.ell || j >= gc.ell) throw std::invalid_argument("bond outside the block");
  if (g.size() != gc.size()) throw std::invalid_argument("function size differs from block space");
  double s = 0.0;
  for (std::size_t i = 0; i < gc.size(); ++i) {
    const std::uint32_t w = gc.configs[i];
    const double dg = g[block_swap(w, gc.ell, j)] - g[w];
    if (dg != 0.0) s += gc.weights[i] * block_rate(w, gc.ell, j, kernel, gc.beta) * dg * dg;
  }
  return 0.25 * s;
}

// Summed over all 2 ell internal bonds.
inline double dirichlet_form(int ell, const KacKernel& kernel, double beta, const std::vector<double>& g) {
  const auto gc = enumerate_block(ell, 0.0, kernel, beta, BlockKind::grand_canonical);
  double s = 0.0;
  for (int j = -ell; j < ell; ++j) s += dirichlet_form_bond(gc, j, kernel, g);
  return s;
}

// -<g, L_{j,j+1} g>_gc evaluated directly from the generator.
inline double generator_form_bond(const BlockMeasure& gc, int j, const KacKernel& kernel,
                                  const std::vector<double>& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < gc.size(); ++i) {
    const std::uint32_t w = gc.configs[i];
    s += gc.weights[i] * g[w] * block_rate(w, gc.ell, j, kernel, gc.beta) * (g[block_swap(w, gc.ell, j)] - g[w]);
  }
  return -s;
}

// I(f) = D(sqrt f) for a density f with E_gc[f] = 1.
inline double fisher(int ell, const KacKernel& kernel, double beta, const std::vector<double>& density) {
  const auto gc = enumerate_block(ell, 0.0, kernel, beta, BlockKind::grand_canonical);
  if (density.size() != gc.size()) throw std::invalid_argument("density size differs from block space");
  double mass = 0.0;
  for (std::size_t i = 0; i < gc.size(); ++i) {
    if (density[i] < 0.0) throw std::invalid_argument("density must be nonnegative");
    mass += gc.weights[i] * density[i];
  }
  if (std::abs(mass - 1.0) > 1e-10) throw std::invalid_argument("density not normalized");
  std::vector<double> root(density.size());
  for (std::size_t i = 0; i < root.size(); ++i) root[i] = std::sqrt(density[i]);
  double s = 0.0;
  for (int j = -ell; j < ell; ++j) s += dirichlet_form_bond(gc, j, kernel, root);
  return s;
}

inline double relative_entropy(const std::vector<double>& mu, const std::vector<double>& nu) {
  if (mu.size() != nu.size()) throw std::invalid_argument("measures on different spaces");
  double h = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu[i] == 0.0) continue;
    if (nu[i] == 0.0) throw std::invalid_argument("mu is not absolutely continuous w.r.t. nu");
    h += mu[i] * std::log(mu[i] / nu[i]);
  }
  return h;
}

struct EntropyCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds() const { return lhs <= rhs + 1e-12 * (1.0 + std::abs(rhs)); }
};

// E_mu F <= H(mu|nu)/a + log(E_nu e^{aF})/a
inline EntropyCheck entropy_inequality_check(const std::vector<double>& mu, const std::vector<double>& nu,
                                             const std::vector<double>& F, double a) {
  if (a <= 0.0) throw std::invalid_argument("a must be positive");
  if (F.size() != mu.size()) throw std::invalid_argument("F size differs from the space");
  EntropyCheck c;
  const double H = relative_entropy(mu, nu);
  const double top = *std::max_element(F.begin(), F.end());
  double mgf = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    c.lhs += mu[i] * F[i];
    mgf += nu[i] * std::exp(a * (F[i] - top));
  }
  c.rhs = H / a + top + std::log(mgf) / a;
  if (!c.holds()) throw std::logic_error("entropy inequality violated");
  return c;
}

inline EntropyCheck entropy_inequality_check(const BlockMeasure& mu, const BlockMeasure& nu,
                                             const std::function<double(std::uint32_t)>& F, double a) {
  require_same_support(mu, nu);
  std::vector<double> f(mu.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = F(mu.configs[i]);
  return entropy_inequality_check(mu.weights, nu.weights, f, a);
}

struct OracleRow {
  int L;
  double m;
  double phi_enumerated;
  double phi_closed_form;
  double tv;
  double tv_bound;  // 4 * TV
};

inline std::vector<OracleRow> oracle_table(int L, const KacKernel& kernel, double beta) {
  std::vector<OracleRow> rows;
  for (int k = 0; k <= 2 * L + 1; ++k) {
    const double m = block_m(L, k);
    const auto can = enumerate_sector(L, k, kernel, beta, BlockKind::canonical);
    const auto aux = enumerate_sector(L, k, kernel, beta, BlockKind::auxiliary);
    const double tv = tv_distance(can, aux);
    rows.push_back({L, m, can.expect([&](std::uint32_t w) { return d0_squared(w, L); }), d0sq_closed_form(L, m), tv,
                    4.0 * tv});
  }
  return rows;
}

}  // namespace ikk
