#include <gtest/gtest.h>

#include <cmath>

#include "ikk/sch.hpp"
#include "ikk/stats.hpp"

using namespace ikk;

namespace {

SCHParams base(double chi = 0.0, double sigma = 0.0) {
  SCHParams p;
  p.nu = 1e-3;
  p.A = 0.05;
  p.chi = chi;
  p.sigma_star = sigma;
  p.n_modes = 16;
  p.dt = 1e-3;
  p.T = 0.05;
  return p;
}

SpectralField smooth_initial(std::int64_t K, double mass = 0.0) {
  SpectralField f(2 * K + 1);
  f.at(0) = mass;
  f.at(1) = cplx(0.3, -0.1);
  f.at(2) = cplx(0.0, 0.2);
  f.at(3) = cplx(-0.05, 0.05);
  enforce_hermitian(f);
  return f;
}

double l2_distance(const SpectralField& a, const SpectralField& b) {
  double s = 0.0;
  for (std::int64_t k = -a.N(); k <= a.N(); ++k) s += std::norm(a.at(k) - b.at(k));
  return std::sqrt(s);
}

}  // namespace

TEST(Params, TheoremMapping) {
  const auto p = SCHParams::from_theorem(1.3, 0.7, 0.01, 2.0);
  EXPECT_LT(p.mapping_defect(), 1e-14);
  EXPECT_DOUBLE_EQ(p.A, 1.7 * 1.3 / 2);
  EXPECT_DOUBLE_EQ(p.chi, 1.3 * 0.7 / 6);
  EXPECT_DOUBLE_EQ(p.sigma_star * p.sigma_star, 2.0);
  SCHParams q = p;
  q.dt = 0.0;
  EXPECT_THROW(q.validate(), std::invalid_argument);
  q.dt = 1e-3;
  q.noise_dt = 3e-4;
  EXPECT_THROW(q.validate(), std::invalid_argument);
}

TEST(ZStep, DeterministicDecayAndZeroMode) {
  auto p = base();
  SpectralField Z = smooth_initial(p.n_modes, 0.0);
  const auto Z0 = Z;
  z_step(Z, p, 0.01, 1, 0);
  EXPECT_EQ(Z.at(0), cplx(0.0));
  for (std::int64_t k = 1; k <= 3; ++k)
    EXPECT_LT(std::abs(Z.at(k) - std::exp(-p.nu * std::pow(wave(k), 4) * 0.01) * Z0.at(k)), 1e-15);
  EXPECT_THROW(z_step(Z, p, 0.0, 1, 0), std::invalid_argument);
}

TEST(ZStep, StationaryVariance) {
  auto p = base(0.0, 1.0);
  p.nu = 0.01;
  const int reps = 256;
  // relax for ten slowest decay times in one exact step, then sample
  const double relax = 10.0 / stiff_symbol(p, 1);
  for (std::int64_t k = 1; k <= 8; ++k) {
    std::vector<double> e2;
    for (int r = 0; r < reps; ++r) {
      SpectralField Z(2 * p.n_modes + 1);
      z_step(Z, p, relax, noise_seed(3, r), 0);
      z_step(Z, p, 1e-3, noise_seed(3, r), 1);
      e2.push_back(std::norm(Z.at(k)));
      EXPECT_LT(Z.hermitian_defect(), 1e-15);
    }
    const auto [m, se] = mean_stderr(e2);
    EXPECT_LT(std::abs(m - z_stationary_variance(p, k)), 3.5 * se) << k;
    EXPECT_NEAR(z_stationary_variance(p, k), 1.0 / (2 * p.nu * wave(k) * wave(k)), 1e-12);
  }
}

TEST(ZStep, FineCompositionMatchesSubdividedRun) {
  auto p = base(0.0, 0.5);
  p.noise_dt = 2.5e-4;
  SpectralField a(33), b(33);
  for (int j = 0; j < 4; ++j) z_step(a, p, 2.5e-4, 9, j);
  p.dt = 1e-3;
  const int m = p.noise_substeps();
  ASSERT_EQ(m, 4);
  for (int j = 0; j < m; ++j) z_step(b, p, p.dt / m, 9, j);
  for (std::int64_t k = -16; k <= 16; ++k) EXPECT_EQ(a.at(k), b.at(k));
}

TEST(YStep, ZeroStaysZeroAndLinearDecay) {
  auto p = base(0.3);
  SCHState s;
  s.Y = SpectralField(p.grid());
  s.Z = SpectralField(p.grid());
  y_step(s, p);
  for (const auto& c : s.Y.coeffs()) EXPECT_EQ(c, cplx(0.0));
  // single mode, chi = A = 0: exact decay exp(-nu q^4 T)
  p.A = 0.0;
  p.chi = 0.0;
  p.nu = 1e-3;
  std::vector<double> err;
  for (double dt : {1e-3, 5e-4, 2.5e-4}) {
    p.dt = dt;
    SCHState st;
    st.Y = SpectralField(p.grid());
    st.Y.at(2) = 1.0;
    enforce_hermitian(st.Y);
    st.Z = SpectralField(p.grid());
    for (int i = 0; i < std::lround(0.05 / dt); ++i) y_step(st, p);
    err.push_back(std::abs(st.Y.at(2) - std::exp(-p.nu * std::pow(wave(2), 4) * 0.05)));
  }
  EXPECT_NEAR(err[0] / err[1], 2.0, 0.15);
  EXPECT_NEAR(err[1] / err[2], 2.0, 0.15);
}

TEST(YStep, ManufacturedSolutionFirstOrder) {
  auto p = base(0.5);
  p.nu = 2e-3;
  const double T = 0.2;
  auto exact = [&](double t) {
    SpectralField f(p.grid());
    f.at(1) = cplx(0.0, -0.5 * std::exp(-t));
    enforce_hermitian(f);
    return f;
  };
  std::vector<double> err;
  for (double dt : {2e-3, 1e-3, 5e-4}) {
    p.dt = dt;
    SCHState s;
    s.Y = exact(0.0);
    s.Z = SpectralField(p.grid());
    for (int i = 0; i < std::lround(T / dt); ++i) {
      const double t = i * dt;
      const auto Ys = exact(t);
      const auto C = cubic_hat(Ys);
      SpectralField g(p.grid());
      for (std::int64_t k = -p.n_modes; k <= p.n_modes; ++k)
        g.at(k) = (linear_symbol(p, k) - 1.0) * Ys.at(k) + p.chi * wave(k) * wave(k) * C.at(k);
      y_step(s, p, &g);
      s.t = (i + 1) * dt;
    }
    err.push_back(l2_distance(s.Y, exact(T)));
  }
  EXPECT_GT(std::log2(err[0] / err[1]), 0.9);
  EXPECT_GT(std::log2(err[1] / err[2]), 0.9);
}

TEST(YStep, BlowUpGuard) {
  auto p = base();
  p.A = 50.0;  // strongly destabilizing backward diffusion, no cubic
  p.nu = 1e-4;
  p.T = 20.0;
  EXPECT_THROW(solve(p, smooth_initial(p.n_modes), 1), BlowUp);
}

TEST(Solve, MassRealnessDeterminism) {
  auto p = base(0.2, 0.3);
  p.mass = 0.25;
  p.T = 0.2;
  const auto X0 = smooth_initial(p.n_modes, 0.25);
  const auto a = solve(p, X0, 7, {10, true, 0});
  const auto b = solve(p, X0, 7, {10, true, 0});
  const auto c = solve(p, X0, 7, {10, true, 1});
  ASSERT_EQ(a.diagnostics.size(), 201u);
  for (const auto& d : a.diagnostics) {
    EXPECT_NEAR(d.mass, 0.25, 1e-13);
    EXPECT_LT(d.max_imag, 1e-12);
  }
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) EXPECT_EQ(a.states[i].Z.coeffs(), b.states[i].Z.coeffs());
  EXPECT_NE(a.final_state().Z.coeffs(), c.final_state().Z.coeffs());
  EXPECT_THROW(solve(p, smooth_initial(p.n_modes, 0.0), 7), std::invalid_argument);
}

TEST(Energy, CubicPairingQuadrature) {
  Philox4x32 g(4, 0);
  SpectralField Y(33), Z(33);
  Y.at(0) = 0.3;
  for (std::int64_t k = 1; k <= 16; ++k) {
    Y.at(k) = cplx(g.normal(), g.normal()) / double(k * k);
    Z.at(k) = cplx(g.normal(), g.normal()) / double(k);
  }
  enforce_hermitian(Y);
  enforce_hermitian(Z);
  const double a = cubic_pairing_spectral(Y, Z), b = cubic_pairing_quadrature(Y, Z);
  EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(a)));
}

TEST(Energy, ZeroAndLinearRefinement) {
  auto p = base();
  p.T = 0.02;
  const auto zero = solve(p, SpectralField(p.grid()), 1, {1, false, 0});
  const auto r0 = energy_identity_check(zero, p);
  EXPECT_EQ(r0.max_abs_residual, 0.0);
  p.A = 0.0;
  p.nu = 2e-3;
  std::vector<double> res;
  for (double dt : {1e-3, 5e-4, 2.5e-4}) {
    p.dt = dt;
    const auto path = solve(p, smooth_initial(p.n_modes), 1, {1, false, 0});
    res.push_back(energy_identity_check(path, p).mean_abs_residual);
  }
  EXPECT_LT(res[1], 0.6 * res[0]);
  EXPECT_LT(res[2], 0.6 * res[1]);
}

TEST(Energy, NonlinearNoisyRefinement) {
  auto p = base(0.5, 0.1);
  p.nu = 1e-2;
  p.T = 0.05;
  std::vector<double> dts{1e-3, 5e-4, 2.5e-4}, res;
  p.noise_dt = dts.back();
  for (double dt : dts) {
    p.dt = dt;
    const auto path = solve(p, smooth_initial(p.n_modes), 2, {1, false, 0});
    res.push_back(energy_identity_check(path, p).mean_abs_residual);
  }
  EXPECT_GT(fit_slope({std::log(dts[0]), std::log(dts[1]), std::log(dts[2])},
                      {std::log(res[0]), std::log(res[1]), std::log(res[2])}),
            0.9);
}

TEST(Convergence, PathwiseOrder) {
  auto p = base(0.5, 0.1);
  p.nu = 1e-2;
  p.A = 0.5;
  p.T = 0.05;
  double order = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto r = self_convergence(p, smooth_initial(p.n_modes), seed, {1e-3, 5e-4, 2.5e-4});
    EXPECT_EQ(r.diffs.size(), 2u);
    order += r.order / 4;
  }
  EXPECT_GT(order, 0.9);
}

TEST(Convergence, ImexMatchesExponentialInTheLimit) {
  // both steppers approach the same path; differences shrink with dt
  auto p = base(0.5, 0.1);
  p.nu = 1e-2;
  p.T = 0.02;
  p.noise_dt = 1.25e-4;
  std::vector<double> gap;
  for (double dt : {1e-3, 2.5e-4}) {
    p.dt = dt;
    p.stepper = Stepper::imex;
    const auto a = solve(p, smooth_initial(p.n_modes), 3).final_state().X();
    p.stepper = Stepper::exponential;
    const auto b = solve(p, smooth_initial(p.n_modes), 3).final_state().X();
    gap.push_back(l2_distance(a, b));
  }
  EXPECT_LT(gap[1], gap[0]);
}

TEST(Exponential, LinearModeIsExact) {
  auto p = base();
  p.A = 0.0;
  p.nu = 1e-3;
  p.T = 0.05;
  SpectralField f(p.grid());
  f.at(2) = 1.0;
  enforce_hermitian(f);
  const auto s = solve(p, f, 1).final_state();
  EXPECT_NEAR(std::abs(s.Y.at(2) - std::exp(-p.nu * std::pow(wave(2), 4) * p.T)), 0.0, 1e-13);
}
