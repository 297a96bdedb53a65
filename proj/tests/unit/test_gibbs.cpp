#include <gtest/gtest.h>

#include <cmath>

#include "ikk/gibbs.hpp"
#include "ikk/rng.hpp"

using namespace ikk;

namespace {

const KacKernel& kern(double gamma = 0.1) {
  static const auto k01 = KacKernel::build(Profile::gaussian, 0.1, 200);
  static const auto k02 = KacKernel::build(Profile::gaussian, 0.2, 200);
  return gamma == 0.1 ? k01 : k02;
}

}  // namespace

TEST(Enumerate, SingletonAndUniform) {
  const auto a = enumerate_block(1, 1.0, kern(), 1.0, BlockKind::canonical);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.weights[0], 1.0);
  const auto b = enumerate_block(1, 1.0 / 3.0, kern(), 0.0, BlockKind::canonical);
  ASSERT_EQ(b.size(), 3u);
  for (double w : b.weights) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
  EXPECT_THROW(enumerate_block(1, 0.5, kern(), 1.0, BlockKind::canonical), std::invalid_argument);
  EXPECT_THROW(enumerate_block(12, 0.0, kern(), 1.0, BlockKind::grand_canonical), std::invalid_argument);
}

TEST(Enumerate, BoltzmannRatios) {
  const auto mu = enumerate_block(2, 0.2, kern(), 1.0, BlockKind::canonical);
  double total = 0.0;
  for (double w : mu.weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-14);
  // independent energy: direct double sum with explicit spin arrays
  auto energy = [&](std::uint32_t w) {
    int s[5];
    for (int i = 0; i < 5; ++i) s[i] = (w >> i) & 1 ? 1 : -1;
    double e = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) e -= 0.5 * kern().at_offset(i - j) * s[i] * s[j];
    return e;
  };
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < mu.size(); ++j)
      EXPECT_NEAR(mu.weights[i] / mu.weights[j], std::exp(-(energy(mu.configs[i]) - energy(mu.configs[j]))), 1e-12);
  double z = 0.0;
  for (auto w : mu.configs) z += std::exp(-energy(w));
  EXPECT_NEAR(mu.Z, z, 1e-12 * z);
}

TEST(Phi, ExamplesAndClosedForm) {
  for (int L = 1; L <= 4; ++L) {
    EXPECT_EQ(phi(L, 1.0, kern(), 1.0), 0.0);
    EXPECT_EQ(phi(L, -1.0, kern(), 1.0), 0.0);
    for (int k = 0; k <= 2 * L + 1; ++k) {
      const double m = block_m(L, k);
      EXPECT_NEAR(phi(L, m, kern(), 0.0), d0sq_closed_form(L, m), 1e-12);
      EXPECT_NEAR(phi(L, m, kern(), 1.0, d0_squared, BlockKind::auxiliary), d0sq_closed_form(L, m), 1e-12);
    }
  }
  EXPECT_NEAR(phi(1, 1.0 / 3.0, kern(), 0.0), 8.0 / 3.0, 1e-12);
  EXPECT_NEAR(phi(2, 0.2, kern(), 0.0), 5.0 / 2.0 * (1 - 0.04), 1e-12);
  EXPECT_NEAR(d0sq_closed_form(2, 0.0), 2.5, 1e-15);
  EXPECT_NEAR(two_point(1, 1.0 / 3.0), -1.0 / 3.0, 1e-15);
  // two_point against enumeration of eta_0 eta_1
  for (int L = 1; L <= 4; ++L)
    for (int k = 0; k <= 2 * L + 1; ++k) {
      const auto aux = enumerate_sector(L, k, kern(), 0.0, BlockKind::auxiliary);
      const double e01 = aux.expect([&](std::uint32_t w) { return block_spin(w, L, 0) * block_spin(w, L, 1); });
      EXPECT_NEAR(e01, two_point(L, block_m(L, k)), 1e-12);
    }
  EXPECT_DOUBLE_EQ(closure_a0(3) + closure_a2(3), 0.0);
}

TEST(Phi, TvComparisonAndScaling) {
  // |Phi_can - closed form| <= 4 TV on every sector
  for (double gamma : {0.1, 0.2})
    for (int L = 1; L <= 4; ++L)
      for (const auto& r : oracle_table(L, kern(gamma), 1.0)) {
        EXPECT_LE(std::abs(r.phi_enumerated - r.phi_closed_form), r.tv_bound + 1e-14);
      }
  const auto a = enumerate_block(2, 0.2, kern(), 1.0, BlockKind::canonical);
  EXPECT_EQ(tv_distance(a, a), 0.0);
  EXPECT_NEAR(tv_distance(enumerate_block(2, 0.2, kern(), 0.0, BlockKind::canonical),
                          enumerate_block(2, 0.2, kern(), 0.0, BlockKind::auxiliary)),
              0.0, 1e-15);
  EXPECT_THROW(tv_distance(a, enumerate_block(2, -0.2, kern(), 1.0, BlockKind::canonical)), std::invalid_argument);
}

TEST(Phi, TableMatchesPointwise) {
  const auto t = phi_table(2, kern(), 1.0);
  ASSERT_EQ(t.size(), 6u);
  for (int k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(t[k], phi(2, block_m(2, k), kern(), 1.0));
}

TEST(GrandCanonical, MixtureOfCanonical) {
  for (int ell : {1, 2, 3}) {
    const auto gc = enumerate_block(ell, 0.0, kern(0.2), 1.3, BlockKind::grand_canonical);
    const auto mix = grand_canonical_mixture(ell, kern(0.2), 1.3);
    ASSERT_EQ(gc.configs, mix.configs);
    for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc.weights[i], mix.weights[i], 1e-12);
    EXPECT_NEAR(gc.Z, mix.Z, 1e-12 * gc.Z);
  }
}

TEST(Dirichlet, ConstantAndHandExpansion) {
  EXPECT_EQ(dirichlet_form(2, kern(), 1.0, std::vector<double>(32, 3.0)), 0.0);
  EXPECT_EQ(fisher(2, kern(), 1.0, std::vector<double>(32, 1.0)), 0.0);
  // ell = 1, beta = 0: uniform law 1/8, rates 1/2. Density (1-t) + 8t 1{w0}
  // with w0 = sites -1,0 up and site 1 down; only bond (0,1) moves w0.
  const double t = 0.3;
  std::vector<double> f(8, 1.0 - t);
  const std::uint32_t w0 = 0b011;
  f[w0] += 8 * t;
  const double a = std::sqrt(1 - t + 8 * t), b = std::sqrt(1 - t);
  // terms w = w0 and w = swap(w0), each 1/4 * 1/8 * 1/2 * (a-b)^2
  EXPECT_NEAR(fisher(1, kern(), 0.0, f), 2 * 0.25 * 0.125 * 0.5 * (a - b) * (a - b), 1e-14);
  EXPECT_THROW(fisher(1, kern(), 0.0, std::vector<double>(8, 2.0)), std::invalid_argument);
}

TEST(Dirichlet, GeneratorFormIsTwiceQuarterIntegral) {
  Philox4x32 g(5, 5);
  std::vector<double> v(32);
  for (auto& x : v) x = g.normal();
  const auto gc = enumerate_block(2, 0.0, kern(0.2), 1.0, BlockKind::grand_canonical);
  for (int j = -2; j < 2; ++j)
    EXPECT_NEAR(generator_form_bond(gc, j, kern(0.2), v), 2.0 * dirichlet_form_bond(gc, j, kern(0.2), v), 1e-12);
}

TEST(Entropy, InequalityCases) {
  const auto nu = enumerate_block(2, 0.2, kern(), 1.0, BlockKind::canonical);
  std::vector<double> F(nu.size());
  for (std::size_t i = 0; i < F.size(); ++i) F[i] = d0_squared(nu.configs[i], 2);
  const auto same = entropy_inequality_check(nu.weights, nu.weights, F, 1.0);
  EXPECT_GE(same.rhs - same.lhs, 0.0);
  const auto aux = enumerate_block(2, 0.2, kern(), 1.0, BlockKind::auxiliary);
  const auto flat = entropy_inequality_check(aux.weights, nu.weights, std::vector<double>(nu.size(), 2.0), 0.7);
  EXPECT_NEAR(flat.rhs, 2.0 + relative_entropy(aux.weights, nu.weights) / 0.7, 1e-12);
  EXPECT_NEAR(flat.lhs, 2.0, 1e-12);
  Philox4x32 g(11, 0);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> mu(nu.size()), nv(nu.size()), f(nu.size());
    double sm = 0, sn = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      sm += (mu[i] = g.exponential(1.0));
      sn += (nv[i] = g.exponential(1.0));
      f[i] = 4 * g.uniform() - 2;
    }
    for (std::size_t i = 0; i < mu.size(); ++i) {
      mu[i] /= sm;
      nv[i] /= sn;
    }
    for (double a : {0.5, 1.0, 2.0}) ASSERT_TRUE(entropy_inequality_check(mu, nv, f, a).holds());
  }
  std::vector<double> bad{1.0, 0.0}, ref{0.0, 1.0};
  EXPECT_THROW(entropy_inequality_check(bad, ref, {1.0, 1.0}, 1.0), std::invalid_argument);
}
