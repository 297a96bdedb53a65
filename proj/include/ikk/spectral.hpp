#pragma once

// Fourier extension of lattice fields on the unit torus, difference-operator
// symbols, discrete Sobolev norms and the discrete bi-Laplacian semigroup.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ikk/kernel.hpp"

namespace ikk {

using cplx = std::complex<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace detail {

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// FFTW planning is not thread safe; execution of a finished plan on new arrays is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline fftw_plan cached_plan(int n, int sign) {
  static std::map<std::pair<int, int>, PlanHandle> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find({n, sign});
  if (it != cache.end()) return it->second.get();
  std::vector<cplx> a(n), b(n);
  fftw_plan p = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(a.data()),
                                 reinterpret_cast<fftw_complex*>(b.data()), sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw std::runtime_error("FFTW planning failed");
  cache.emplace(std::make_pair(n, sign), PlanHandle(p));
  return p;
}

}  // namespace detail

// Unnormalized transforms: forward sum_j f_j e^{-2 pi i jk/n}, backward with +.
inline void fft(const cplx* in, cplx* out, int n, int sign) {
  fftw_execute_dft(detail::cached_plan(n, sign), reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

inline std::vector<cplx> fft_forward(const std::vector<cplx>& in) {
  std::vector<cplx> out(in.size());
  fft(in.data(), out.data(), int(in.size()), FFTW_FORWARD);
  return out;
}
inline std::vector<cplx> fft_backward(const std::vector<cplx>& in) {
  std::vector<cplx> out(in.size());
  fft(in.data(), out.data(), int(in.size()), FFTW_BACKWARD);
  return out;
}

// Signed frequency of FFT slot j on an n-point grid.
inline std::int64_t signed_mode(std::int64_t j, std::int64_t n) { return j <= (n - 1) / 2 ? j : j - n; }

// Coefficients u^(k) = eps sum_j u(j) e^{-2 pi i k j eps}, k in [-N, N].
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(std::int64_t n) : coeffs_(n, cplx(0.0)) {
    if (n <= 0 || n % 2 == 0) throw std::invalid_argument("spectral fields live on 2N+1 sites");
  }

  std::int64_t real_space_len() const { return static_cast<std::int64_t>(coeffs_.size()); }
  std::int64_t n_modes() const { return real_space_len(); }
  std::int64_t N() const { return (real_space_len() - 1) / 2; }
  double eps() const { return 1.0 / double(real_space_len()); }
  cplx& at(std::int64_t k) { return coeffs_[slot(k)]; }
  const cplx& at(std::int64_t k) const { return coeffs_[slot(k)]; }
  const std::vector<cplx>& coeffs() const { return coeffs_; }
  std::vector<cplx>& coeffs() { return coeffs_; }

  // (Ext u)(x) = sum_k u^(k) e^{2 pi i k x}
  cplx ext(double x) const {
    cplx acc(0.0);
    for (std::int64_t k = -N(); k <= N(); ++k) acc += at(k) * std::polar(1.0, two_pi * double(k) * x);
    return acc;
  }

  double hermitian_defect() const {
    double d = 0.0;
    for (std::int64_t k = 0; k <= N(); ++k) d = std::max(d, std::abs(at(-k) - std::conj(at(k))));
    return d;
  }

 private:
  std::size_t slot(std::int64_t k) const {
    if (k < -N() || k > N()) throw std::out_of_range("mode outside the Brillouin zone");
    return static_cast<std::size_t>(wrap(k, real_space_len()));
  }
  std::vector<cplx> coeffs_;
};

inline SpectralField dft(const std::vector<double>& u) {
  const std::int64_t n = static_cast<std::int64_t>(u.size());
  SpectralField f(n);
  std::vector<cplx> in(u.begin(), u.end());
  fft(in.data(), f.coeffs().data(), int(n), FFTW_FORWARD);
  const double eps = 1.0 / double(n);
  for (auto& c : f.coeffs()) c *= eps;
  return f;
}

inline std::vector<double> idft(const SpectralField& f) {
  const auto back = fft_backward(f.coeffs());
  std::vector<double> u(back.size());
  for (std::size_t j = 0; j < u.size(); ++j) u[j] = back[j].real();
  return u;
}

inline double l2_lattice(const std::vector<double>& u) {
  double s = 0.0;
  for (double x : u) s += x * x;
  return s / double(u.size());
}

inline double l2_modes(const SpectralField& f) {
  double s = 0.0;
  for (const auto& c : f.coeffs()) s += std::norm(c);
  return s;
}

// Symbols on a grid of spacing eps.
inline double lap_symbol(double k, double eps) {
  const double s = std::sin(std::numbers::pi * k * eps);
  return 4.0 / (eps * eps) * s * s;
}
inline double bilap_symbol(double k, double eps) {
  const double m = lap_symbol(k, eps);
  return m * m;
}
inline cplx difference_symbol(double k, double eps) {
  return (std::polar(1.0, two_pi * k * eps) - 1.0) / eps;
}
// theta(k) = sum_m kappa(m) e^{-2 pi i k eps m}; real by kernel symmetry.
inline double kernel_symbol(const KacKernel& kernel, double k) {
  const double eps = 1.0 / double(kernel.size());
  const std::int64_t R = kernel.support();
  double acc = 0.0;
  for (std::int64_t z = -R; z <= R; ++z) acc += kernel.at_offset(z) * std::cos(two_pi * k * eps * double(z));
  return acc;
}
// q(k) = sigma_tilde^2 |D(k)|^2 |theta(k)|^2
inline double noise_symbol(const KacKernel& kernel, double k, double sigma_tilde_sq) {
  const double eps = 1.0 / double(kernel.size());
  const double th = kernel_symbol(kernel, k);
  return sigma_tilde_sq * std::norm(difference_symbol(k, eps)) * th * th;
}

struct SymbolTable {
  std::vector<std::int64_t> k;
  std::vector<double> lap, bilap, noise;
};

inline SymbolTable symbol_table(const KacKernel& kernel, double sigma_tilde_sq) {
  const double eps = 1.0 / double(kernel.size());
  SymbolTable t;
  for (std::int64_t k = -kernel.N(); k <= kernel.N(); ++k) {
    t.k.push_back(k);
    t.lap.push_back(lap_symbol(double(k), eps));
    t.bilap.push_back(bilap_symbol(double(k), eps));
    t.noise.push_back(noise_symbol(kernel, double(k), sigma_tilde_sq));
  }
  return t;
}

// Periodic second difference (u_{i+1} - 2u_i + u_{i-1}) / eps^2.
inline std::vector<double> laplacian_real(const std::vector<double>& u) {
  const std::int64_t n = static_cast<std::int64_t>(u.size());
  const double inv = double(n) * double(n);
  std::vector<double> out(n);
  for (std::int64_t i = 0; i < n; ++i) out[i] = (u[wrap(i + 1, n)] - 2.0 * u[i] + u[wrap(i - 1, n)]) * inv;
  return out;
}

struct SymbolConstants {
  double c = 0.0;              // min bilap(k) / k^4
  double C = 0.0;              // max bilap(k) / k^4
  double C_consistency = 0.0;  // max |bilap(k) - (2 pi k)^4| / (eps^2 k^6)
};

inline SymbolConstants symbol_check(double eps, std::int64_t k_max) {
  // N = 1/(2 eps) half-width of the zone
  if (eps <= 0.0 || k_max < 1 || double(k_max) > 0.25 / eps)
    throw std::invalid_argument("symbol_check needs 1 <= k_max <= N/2");
  SymbolConstants r{std::numeric_limits<double>::infinity(), 0.0, 0.0};
  for (std::int64_t k = 1; k <= k_max; ++k) {
    const double kk = double(k), b = bilap_symbol(kk, eps), k4 = kk * kk * kk * kk;
    r.c = std::min(r.c, b / k4);
    r.C = std::max(r.C, b / k4);
    r.C_consistency = std::max(r.C_consistency, std::abs(b - std::pow(two_pi * kk, 4)) / (eps * eps * k4 * kk * kk));
  }
  return r;
}

enum class SobolevWeight { laplacian, bilaplacian };

// ||u||_{H^s} = (sum_k (1 + w(k))^s |u^(k)|^2)^{1/2}, w the discrete symbol.
inline double sobolev_norm(const SpectralField& f, double s, SobolevWeight w = SobolevWeight::laplacian) {
  double acc = 0.0;
  for (std::int64_t k = -f.N(); k <= f.N(); ++k) {
    const double sym = w == SobolevWeight::laplacian ? lap_symbol(double(k), f.eps()) : bilap_symbol(double(k), f.eps());
    acc += std::pow(1.0 + sym, s) * std::norm(f.at(k));
  }
  return std::sqrt(acc);
}

// Continuum weight (1 + |k|^2)^s applied to the coefficients of Ext u.
inline double sobolev_norm_continuum(const SpectralField& f, double s) {
  double acc = 0.0;
  for (std::int64_t k = -f.N(); k <= f.N(); ++k) acc += std::pow(1.0 + double(k * k), s) * std::norm(f.at(k));
  return std::sqrt(acc);
}

struct NormEquivalence {
  double discrete = 0.0;
  double continuum = 0.0;
  double ratio = 0.0;  // discrete / continuum
  // Per-mode weight ratio envelope: (1+lap)/(1+k^2) lies in [1, 4 pi^2].
  double lower = 0.0, upper = 0.0;
};

inline NormEquivalence sobolev_equivalence(const SpectralField& f, double s) {
  NormEquivalence r;
  r.discrete = sobolev_norm(f, s);
  r.continuum = sobolev_norm_continuum(f, s);
  r.ratio = r.continuum > 0.0 ? r.discrete / r.continuum : 1.0;
  const double a = 1.0, b = std::pow(two_pi, 2);
  r.lower = std::sqrt(std::min(std::pow(a, s), std::pow(b, s)));
  r.upper = std::sqrt(std::max(std::pow(a, s), std::pow(b, s)));
  return r;
}

inline SpectralField semigroup_apply(const SpectralField& f, double t, double nu) {
  if (t < 0.0 || nu <= 0.0) throw std::invalid_argument("semigroup needs t >= 0 and nu > 0");
  SpectralField g = f;
  for (std::int64_t k = -f.N(); k <= f.N(); ++k) g.at(k) *= std::exp(-t * nu * bilap_symbol(double(k), f.eps()));
  return g;
}

inline std::vector<double> semigroup_apply(const std::vector<double>& u, double t, double nu) {
  return idft(semigroup_apply(dft(u), t, nu));
}

// Keeps |k| <= c / gamma.
inline SpectralField low_pass(const SpectralField& f, double gamma, double c = 1.0) {
  SpectralField g = f;
  const double cut = c / gamma;
  for (std::int64_t k = -f.N(); k <= f.N(); ++k)
    if (std::abs(double(k)) > cut) g.at(k) = 0.0;
  return g;
}

struct SemigroupReport {
  double symbol_gap = 0.0;      // (i) sup over |k| <= k_max, t in grid of |e^{-t bilap} - e^{-t (2 pi k)^4}|
  double dyadic_constant = 0.0; // (ii) sup_q 2^q sup_{k in block q} int_0^T e^{-2(T-r) bilap(k)} k^2 dr
  double dyadic_q0 = 0.0;       // (ii) on the q = 0 block |k| <= 1
  double increment_constant = 0.0;  // (iii) sup |e^{-t b} - e^{-s b}| / (|t-s| b)^theta
  double increment_diagonal = 0.0;  // (iii) at t = s
};

inline double dyadic_integral(double k, double eps, double T) {
  if (k == 0.0) return 0.0;
  const double b = bilap_symbol(k, eps);
  return k * k * (-std::expm1(-2.0 * T * b)) / (2.0 * b);
}

inline SemigroupReport semigroup_estimates(double eps, double T, double theta, std::int64_t k_max = 8) {
  if (!(theta > 0.0 && theta < 0.25)) throw std::invalid_argument("theta must lie in (0, 1/4)");
  if (T <= 0.0) throw std::invalid_argument("T must be positive");
  const std::int64_t N = std::int64_t(std::floor(0.5 * (1.0 / eps - 1.0)));
  SemigroupReport r;
  for (std::int64_t k = 0; k <= std::min(k_max, N); ++k)
    for (int it = 0; it <= 20; ++it) {
      const double t = T * it / 20.0;
      const double a = std::exp(-t * bilap_symbol(double(k), eps)), b = std::exp(-t * std::pow(two_pi * k, 4));
      r.symbol_gap = std::max(r.symbol_gap, std::abs(a - b));
    }
  for (std::int64_t k = 0; k <= std::min<std::int64_t>(1, N); ++k)
    r.dyadic_q0 = std::max(r.dyadic_q0, dyadic_integral(double(k), eps, T));
  r.dyadic_constant = r.dyadic_q0;
  for (int q = 1; (std::int64_t(1) << (q - 1)) < N; ++q) {
    const std::int64_t lo = (std::int64_t(1) << (q - 1)) + 1, hi = std::min(N, std::int64_t(1) << q);
    for (std::int64_t k = lo; k <= hi; ++k)
      r.dyadic_constant = std::max(r.dyadic_constant, std::ldexp(dyadic_integral(double(k), eps, T), q));
  }
  for (std::int64_t k = 1; k <= N; k = std::max(k + 1, k * 5 / 4)) {
    const double b = bilap_symbol(double(k), eps);
    for (int i = 0; i <= 10; ++i)
      for (int j = i; j <= 10; ++j) {
        const double s = T * i / 10.0, t = T * j / 10.0;
        const double num = std::abs(std::exp(-t * b) - std::exp(-s * b));
        if (j == i) {
          r.increment_diagonal = std::max(r.increment_diagonal, num);
          continue;
        }
        r.increment_constant = std::max(r.increment_constant, num / std::pow((t - s) * b, theta));
      }
  }
  return r;
}

inline void write_spectrum_csv(std::ostream& os, const SpectralField& f) {
  os << "k,re,im\n";
  for (std::int64_t k = -f.N(); k <= f.N(); ++k) os << k << ',' << f.at(k).real() << ',' << f.at(k).imag() << '\n';
}

}  // namespace ikk
