#pragma once

// Experiment orchestration: configuration, seeded ensembles, the micro versus
// macro comparison, persistence and plot-data emission.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ikk/coarse.hpp"
#include "ikk/combinatorics.hpp"
#include "ikk/drift.hpp"
#include "ikk/gibbs.hpp"
#include "ikk/kmc.hpp"
#include "ikk/plan.hpp"
#include "ikk/sch.hpp"
#include "ikk/spectral.hpp"
#include "ikk/stats.hpp"
#include "json.hpp"

#ifndef IKK_VERSION
#define IKK_VERSION "0.0.0"
#endif

namespace ikk {

// ---------------------------------------------------------------- workers

inline int worker_count() {
  if (const char* env = std::getenv("IKK_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on a shared-nothing pool. Results must be written
// to per-index slots, so output does not depend on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int workers = 0) {
  if (workers <= 0) workers = worker_count();
  workers = int(std::min<std::size_t>(std::size_t(workers), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------- test functions

struct NamedTest {
  std::string name;
  TorusFunction f, df;
};

// e<k> = cos(2 pi k x), s<k> = sin(2 pi k x), bump = smooth bump of half-width 1/4 at 1/2.
inline NamedTest test_function(const std::string& name) {
  auto mode = [&](std::size_t pos) {
    const std::string digits = name.substr(pos);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("unknown test function '" + name + "'");
    return double(std::stoi(digits));
  };
  if (name == "bump") {
    const double w = 0.25;
    auto f = [w](double x) {
      const double u = (x - 0.5) / w;
      return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
    };
    auto df = [w, f](double x) {
      const double u = (x - 0.5) / w;
      return std::abs(u) < 1.0 ? f(x) * (-2.0 * u / ((1.0 - u * u) * (1.0 - u * u))) / w : 0.0;
    };
    return {name, f, df};
  }
  if (name.size() > 1 && name[0] == 'e') {
    const double k = mode(1), q = two_pi * k;
    return {name, [q](double x) { return std::cos(q * x); }, [q](double x) { return -q * std::sin(q * x); }};
  }
  if (name.size() > 1 && name[0] == 's') {
    const double k = mode(1), q = two_pi * k;
    return {name, [q](double x) { return std::sin(q * x); }, [q](double x) { return q * std::cos(q * x); }};
  }
  throw std::invalid_argument("unknown test function '" + name + "'");
}

// Fourier coefficients of phi on modes |k| <= K, from a fine sample grid.
inline SpectralField test_spectrum(const NamedTest& phi, std::int64_t K, std::int64_t grid = 4097) {
  return resample(dft(sample_on_lattice(phi.f, std::max(grid, 2 * K + 1))), K);
}

// int X phi for a trigonometric polynomial X.
inline double pair_spectral(const SpectralField& X, const SpectralField& phi_hat) {
  double s = 0.0;
  const std::int64_t K = std::min(X.N(), phi_hat.N());
  for (std::int64_t k = -K; k <= K; ++k) s += (X.at(k) * std::conj(phi_hat.at(k))).real();
  return s;
}

// --------------------------------------------------------------- config

enum class RunKind { simulate, spde, oracle, compare, symbol_audit };

inline std::string to_string(RunKind k) {
  switch (k) {
    case RunKind::simulate: return "simulate";
    case RunKind::spde: return "spde";
    case RunKind::oracle: return "oracle";
    case RunKind::compare: return "compare";
    case RunKind::symbol_audit: return "symbol_audit";
  }
  return "?";
}
inline RunKind parse_run_kind(const std::string& s) {
  for (RunKind k : {RunKind::simulate, RunKind::spde, RunKind::oracle, RunKind::compare, RunKind::symbol_audit})
    if (s == to_string(k)) return k;
  if (s == "symbol-audit") return RunKind::symbol_audit;
  throw std::invalid_argument("unknown run kind '" + s + "'");
}

enum class InitialKind { bernoulli, modulated, checkerboard };

inline std::string to_string(InitialKind k) {
  return k == InitialKind::bernoulli ? "bernoulli" : k == InitialKind::modulated ? "modulated" : "checkerboard";
}
inline InitialKind parse_initial_kind(const std::string& s) {
  for (InitialKind k : {InitialKind::bernoulli, InitialKind::modulated, InitialKind::checkerboard})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown initial condition '" + s + "'");
}

// Which coefficients drive the macroscopic side.
enum class CoefficientSource { theorem, effective, effective_finite };

inline std::string to_string(CoefficientSource c) {
  return c == CoefficientSource::theorem ? "theorem" : c == CoefficientSource::effective ? "effective" : "effective_finite";
}
inline CoefficientSource parse_coefficient_source(const std::string& s) {
  for (auto c : {CoefficientSource::theorem, CoefficientSource::effective, CoefficientSource::effective_finite})
    if (s == to_string(c)) return c;
  throw std::invalid_argument("unknown coefficient source '" + s + "'");
}

struct InitialSpec {
  InitialKind kind = InitialKind::bernoulli;
  double mbar = 0.0;
  double amplitude = 0.0;  // modulated: m(x) = mbar + amplitude cos(2 pi x), spin units
  bool fixed_sector = true;  // bernoulli: exact number of up spins
};

struct ExperimentConfig {
  RunKind run_kind = RunKind::simulate;
  std::string output = "out";
  std::uint64_t seed = 1;
  std::int64_t replicas = 2;

  Profile profile = Profile::gaussian;
  double gamma = 0.1;
  std::int64_t N = 0;   // 0: chosen from ratio
  double ratio = 0.02;  // eps/gamma when N = 0
  double lambda = 1.0;
  double sigma_star_sq = 1.0;
  double beta = 0.0;
  PlanMode mode = PlanMode::ratio_locked;
  EpsConvention convention = EpsConvention::per_site;

  std::vector<double> times{0.1};
  std::vector<std::string> phis{"e1"};
  InitialSpec initial;

  std::int64_t spde_modes = 16;
  double spde_dt = 1e-3;
  CoefficientSource coefficients = CoefficientSource::effective;
  Stepper stepper = Stepper::exponential;
  double spde_nu = 0.0;  // theorem source: 0 means the plan's nu limit

  std::vector<double> compare_gammas{0.2, 0.1, 0.05};
  std::vector<std::int64_t> compare_N{};  // empty: from ratio
  std::int64_t min_replicas = 32;

  int oracle_L_max = 4;
  std::vector<std::int64_t> audit_inverse_eps{64, 128, 256};
  std::int64_t audit_k_max = 16;

  bool write_field = false;
};

namespace detail {

inline std::string fmt_double(double v) {
  // shortest form that parses back to the same double
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
  return s;
}
inline std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    const auto a = cur.find_first_not_of(" \t"), b = cur.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(cur.substr(a, b - a + 1));
  }
  return out;
}
inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace detail

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& msg) : std::invalid_argument(field + ": " + msg), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Ordered (key, text) pairs; the on-disk form is one "key = value" per line.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
  using detail::fmt_double;
  auto dl = [](const std::vector<double>& v) { return detail::join<double>(v, fmt_double); };
  auto il = [](const std::vector<std::int64_t>& v) {
    return detail::join<std::int64_t>(v, [](const std::int64_t& x) { return std::to_string(x); });
  };
  auto sl = [](const std::vector<std::string>& v) {
    return detail::join<std::string>(v, [](const std::string& x) { return x; });
  };
  return {
      {"run_kind", to_string(c.run_kind)},
      {"output", c.output},
      {"seed", std::to_string(c.seed)},
      {"replicas", std::to_string(c.replicas)},
      {"plan.profile", std::string(to_string(c.profile))},
      {"plan.gamma", fmt_double(c.gamma)},
      {"plan.N", std::to_string(c.N)},
      {"plan.ratio", fmt_double(c.ratio)},
      {"plan.lambda", fmt_double(c.lambda)},
      {"plan.sigma_star_sq", fmt_double(c.sigma_star_sq)},
      {"plan.beta", fmt_double(c.beta)},
      {"plan.mode", std::string(to_string(c.mode))},
      {"plan.convention", c.convention == EpsConvention::per_site ? "per_site" : "inverse_N"},
      {"schedule.times", dl(c.times)},
      {"phis", sl(c.phis)},
      {"initial.kind", to_string(c.initial.kind)},
      {"initial.mbar", fmt_double(c.initial.mbar)},
      {"initial.amplitude", fmt_double(c.initial.amplitude)},
      {"initial.fixed_sector", c.initial.fixed_sector ? "true" : "false"},
      {"spde.n_modes", std::to_string(c.spde_modes)},
      {"spde.dt", fmt_double(c.spde_dt)},
      {"spde.coefficients", to_string(c.coefficients)},
      {"spde.stepper", c.stepper == Stepper::exponential ? "exponential" : "imex"},
      {"spde.nu", fmt_double(c.spde_nu)},
      {"compare.gammas", dl(c.compare_gammas)},
      {"compare.N", il(c.compare_N)},
      {"compare.min_replicas", std::to_string(c.min_replicas)},
      {"oracle.L_max", std::to_string(c.oracle_L_max)},
      {"audit.inverse_eps", il(c.audit_inverse_eps)},
      {"audit.k_max", std::to_string(c.audit_k_max)},
      {"simulate.write_field", c.write_field ? "true" : "false"},
  };
}

inline std::string to_text(const ExperimentConfig& c) {
  std::string s;
  for (const auto& [k, v] : config_entries(c)) s += k + " = " + v + "\n";
  return s;
}

namespace detail {

inline double parse_num(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}
inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  }
}
inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}
template <class F>
auto wrap_enum(const std::string& key, const std::string& v, F f) {
  try {
    return f(v);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  if (c.replicas < 1) throw ConfigError("replicas", "must be at least 1");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw ConfigError("plan.gamma", "must lie in (0, 1)");
  if (c.N < 0) throw ConfigError("plan.N", "must be nonnegative");
  if (c.N == 0 && !(c.ratio > 0.0)) throw ConfigError("plan.ratio", "must be positive when plan.N = 0");
  if (!(c.lambda > 0.0)) throw ConfigError("plan.lambda", "must be positive");
  if (!(c.sigma_star_sq > 0.0)) throw ConfigError("plan.sigma_star_sq", "must be positive");
  if (!(c.beta >= 0.0)) throw ConfigError("plan.beta", "must be nonnegative");
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    if (!(c.times[i] > 0.0)) throw ConfigError("schedule.times", "times must be positive");
    if (i && c.times[i] <= c.times[i - 1]) throw ConfigError("schedule.times", "times must increase");
  }
  for (const auto& p : c.phis) detail::wrap_enum("phis", p, [](const std::string& s) { return test_function(s); });
  if (std::abs(c.initial.mbar) > 1.0) throw ConfigError("initial.mbar", "must lie in [-1, 1]");
  if (std::abs(c.initial.mbar) + std::abs(c.initial.amplitude) > 1.0)
    throw ConfigError("initial.amplitude", "profile leaves [-1, 1]");
  if (c.spde_modes < 1) throw ConfigError("spde.n_modes", "must be positive");
  if (!(c.spde_dt > 0.0)) throw ConfigError("spde.dt", "must be positive");
  if (c.run_kind == RunKind::compare || c.run_kind == RunKind::spde)
    for (double t : c.times)
      if (std::abs(std::round(t / c.spde_dt) * c.spde_dt - t) > 1e-9 * t)
        throw ConfigError("schedule.times", "times must be multiples of spde.dt");
  if (!c.compare_N.empty() && c.compare_N.size() != c.compare_gammas.size())
    throw ConfigError("compare.N", "needs one entry per compare.gammas value");
  if (c.oracle_L_max < 1 || c.oracle_L_max > 10) throw ConfigError("oracle.L_max", "must lie in [1, 10]");
}

inline ExperimentConfig from_text(const std::string& text) {
  using namespace detail;
  ExperimentConfig c;
  std::map<std::string, std::function<void(const std::string&)>> set{
      {"run_kind", [&](const std::string& v) { c.run_kind = wrap_enum("run_kind", v, parse_run_kind); }},
      {"output", [&](const std::string& v) { c.output = v; }},
      {"seed", [&](const std::string& v) { c.seed = std::uint64_t(parse_int("seed", v)); }},
      {"replicas", [&](const std::string& v) { c.replicas = parse_int("replicas", v); }},
      {"plan.profile",
       [&](const std::string& v) { c.profile = wrap_enum("plan.profile", v, [](const std::string& s) { return parse_profile(s); }); }},
      {"plan.gamma", [&](const std::string& v) { c.gamma = parse_num("plan.gamma", v); }},
      {"plan.N", [&](const std::string& v) { c.N = parse_int("plan.N", v); }},
      {"plan.ratio", [&](const std::string& v) { c.ratio = parse_num("plan.ratio", v); }},
      {"plan.lambda", [&](const std::string& v) { c.lambda = parse_num("plan.lambda", v); }},
      {"plan.sigma_star_sq", [&](const std::string& v) { c.sigma_star_sq = parse_num("plan.sigma_star_sq", v); }},
      {"plan.beta", [&](const std::string& v) { c.beta = parse_num("plan.beta", v); }},
      {"plan.mode",
       [&](const std::string& v) { c.mode = wrap_enum("plan.mode", v, [](const std::string& s) { return parse_plan_mode(s); }); }},
      {"plan.convention",
       [&](const std::string& v) {
         if (v == "per_site") c.convention = EpsConvention::per_site;
         else if (v == "inverse_N") c.convention = EpsConvention::inverse_N;
         else throw ConfigError("plan.convention", "expected per_site or inverse_N, got '" + v + "'");
       }},
      {"schedule.times",
       [&](const std::string& v) {
         c.times.clear();
         for (const auto& x : split(v)) c.times.push_back(parse_num("schedule.times", x));
       }},
      {"phis", [&](const std::string& v) { c.phis = split(v); }},
      {"initial.kind", [&](const std::string& v) { c.initial.kind = wrap_enum("initial.kind", v, parse_initial_kind); }},
      {"initial.mbar", [&](const std::string& v) { c.initial.mbar = parse_num("initial.mbar", v); }},
      {"initial.amplitude", [&](const std::string& v) { c.initial.amplitude = parse_num("initial.amplitude", v); }},
      {"initial.fixed_sector", [&](const std::string& v) { c.initial.fixed_sector = parse_bool("initial.fixed_sector", v); }},
      {"spde.n_modes", [&](const std::string& v) { c.spde_modes = parse_int("spde.n_modes", v); }},
      {"spde.dt", [&](const std::string& v) { c.spde_dt = parse_num("spde.dt", v); }},
      {"spde.coefficients",
       [&](const std::string& v) { c.coefficients = wrap_enum("spde.coefficients", v, parse_coefficient_source); }},
      {"spde.stepper",
       [&](const std::string& v) {
         if (v == "exponential") c.stepper = Stepper::exponential;
         else if (v == "imex") c.stepper = Stepper::imex;
         else throw ConfigError("spde.stepper", "expected exponential or imex, got '" + v + "'");
       }},
      {"spde.nu", [&](const std::string& v) { c.spde_nu = parse_num("spde.nu", v); }},
      {"compare.gammas",
       [&](const std::string& v) {
         c.compare_gammas.clear();
         for (const auto& x : split(v)) c.compare_gammas.push_back(parse_num("compare.gammas", x));
       }},
      {"compare.N",
       [&](const std::string& v) {
         c.compare_N.clear();
         for (const auto& x : split(v)) c.compare_N.push_back(parse_int("compare.N", x));
       }},
      {"compare.min_replicas", [&](const std::string& v) { c.min_replicas = parse_int("compare.min_replicas", v); }},
      {"oracle.L_max", [&](const std::string& v) { c.oracle_L_max = int(parse_int("oracle.L_max", v)); }},
      {"audit.inverse_eps",
       [&](const std::string& v) {
         c.audit_inverse_eps.clear();
         for (const auto& x : split(v)) c.audit_inverse_eps.push_back(parse_int("audit.inverse_eps", x));
       }},
      {"audit.k_max", [&](const std::string& v) { c.audit_k_max = parse_int("audit.k_max", v); }},
      {"simulate.write_field", [&](const std::string& v) { c.write_field = parse_bool("simulate.write_field", v); }},
  };
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = set.find(key);
    if (it == set.end()) throw ConfigError(key, "unknown field");
    it->second(value);
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

// FNV-1a over the canonical text form.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_text(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline ScalingPlan plan_for(const ExperimentConfig& c, double gamma, std::int64_t N) {
  if (N <= 0) N = n_for_ratio(gamma, c.ratio);
  return make_plan(KacKernel::build(c.profile, gamma, N), c.lambda, c.sigma_star_sq, c.beta, c.mode, c.convention);
}
inline ScalingPlan plan_for(const ExperimentConfig& c) { return plan_for(c, c.gamma, c.N); }

// ------------------------------------------------------- initial conditions

struct InitialCondition {
  SpinConfig cfg;
  SpectralField X0{1};  // low-pass projection of the coarse field on the SPDE modes
  std::int64_t M = 0;   // sector magnetization
  double mbar = 0.0;
};

// Spins for the requested profile; X0 is the projection of X_gamma(0) onto
// modes |k| <= K.
inline InitialCondition initial_condition(const InitialSpec& spec, const ScalingPlan& plan, const KacKernel& kernel,
                                          std::int64_t K, std::uint64_t seed, std::uint64_t replica) {
  const std::int64_t n = kernel.size();
  Philox4x32 g(mix64(seed ^ 0x1417ULL), replica);
  std::vector<std::int8_t> s(n, 1);
  switch (spec.kind) {
    case InitialKind::checkerboard:
      for (std::int64_t i = 0; i < n; ++i) s[i] = i % 2 == 0 ? 1 : -1;
      break;
    case InitialKind::bernoulli:
      if (std::abs(spec.mbar) > 1.0) throw std::invalid_argument("infeasible magnetization");
      if (spec.fixed_sector) {
        const auto ups = std::llround(double(n) * (1.0 + spec.mbar) / 2.0);
        std::fill(s.begin(), s.end(), std::int8_t(-1));
        std::fill(s.begin(), s.begin() + ups, std::int8_t(1));
        for (std::int64_t i = n - 1; i > 0; --i) std::swap(s[i], s[g.below(std::uint64_t(i + 1))]);
      } else {
        for (auto& v : s) v = g.uniform() < (1.0 + spec.mbar) / 2.0 ? 1 : -1;
      }
      break;
    case InitialKind::modulated:
      for (std::int64_t i = 0; i < n; ++i) {
        const double m = spec.mbar + spec.amplitude * std::cos(two_pi * double(i) / double(n));
        if (std::abs(m) > 1.0) throw std::invalid_argument("infeasible magnetization profile");
        s[i] = g.uniform() < (1.0 + m) / 2.0 ? 1 : -1;
      }
      break;
  }
  InitialCondition ic;
  ic.cfg = SpinConfig(std::move(s), kernel);
  ic.M = ic.cfg.total_mag();
  ic.mbar = double(ic.M) / double(n);
  std::vector<double> X(n);
  for (std::int64_t i = 0; i < n; ++i) X[i] = ic.cfg.h(i) / plan.delta;
  ic.X0 = resample(dft(X), K);
  enforce_hermitian(ic.X0);
  return ic;
}

// H(uniform on the sector | canonical Gibbs) by enumeration, for small rings.
inline double initial_entropy_small(const KacKernel& kernel, double beta, std::int64_t M) {
  const std::int64_t n = kernel.size();
  if (n > 13) throw std::invalid_argument("entropy enumeration needs N <= 6");
  if ((M + n) % 2 != 0 || std::abs(M) > n) throw std::invalid_argument("magnetization not realizable");
  const auto words = fixed_weight_words(int(n), int((M + n) / 2));
  std::vector<double> e(words.size());
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::vector<std::int8_t> sp(n);
    for (std::int64_t i = 0; i < n; ++i) sp[i] = (words[w] >> i) & 1u ? 1 : -1;
    e[w] = hamiltonian(SpinConfig(std::move(sp), kernel), kernel);
  }
  const double e0 = *std::min_element(e.begin(), e.end());
  double Z = 0.0;
  for (double x : e) Z += std::exp(-beta * (x - e0));
  const double u = 1.0 / double(words.size());
  double h = 0.0;
  for (double x : e) h += u * std::log(u / (std::exp(-beta * (x - e0)) / Z));
  return h;
}

// ------------------------------------------------------------- ensembles

// values[o][t][r]: observable o at time index t for replica r.
struct Ensemble {
  std::vector<std::string> observables;
  std::vector<double> times;
  std::vector<std::vector<std::vector<double>>> values;

  std::size_t replicas() const { return values.empty() || values[0].empty() ? 0 : values[0][0].size(); }
  std::size_t index_of(const std::string& name) const {
    const auto it = std::find(observables.begin(), observables.end(), name);
    if (it == observables.end()) throw std::invalid_argument("ensemble has no observable '" + name + "'");
    return std::size_t(it - observables.begin());
  }
  const std::vector<double>& at(const std::string& name, std::size_t t) const { return values[index_of(name)][t]; }
};

// Observables tracked in every ensemble: the requested phis plus cos/sin of
// modes 1..4 for the low-mode second-moment proxy.
inline std::vector<std::string> ensemble_observables(const std::vector<std::string>& phis) {
  std::vector<std::string> out = phis;
  for (int k = 1; k <= 4; ++k)
    for (const char* p : {"e", "s"}) {
      const std::string name = p + std::to_string(k);
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
  return out;
}

struct MicroEnsemble {
  Ensemble ensemble;
  std::vector<SpectralField> X0;
  std::vector<std::int64_t> M;
  std::uint64_t events = 0;
};

inline MicroEnsemble run_micro_ensemble(const ScalingPlan& plan, const KacKernel& kernel, const InitialSpec& init,
                                        std::int64_t K, std::int64_t replicas, std::uint64_t seed,
                                        const std::vector<double>& times, const std::vector<std::string>& phis) {
  MicroEnsemble out;
  auto& e = out.ensemble;
  e.observables = ensemble_observables(phis);
  e.times = times;
  e.values.assign(e.observables.size(), std::vector<std::vector<double>>(times.size(), std::vector<double>(replicas)));
  std::vector<std::vector<double>> lattice;
  for (const auto& o : e.observables) lattice.push_back(sample_on_lattice(test_function(o).f, kernel.size()));
  out.X0.assign(replicas, SpectralField(2 * K + 1));
  out.M.assign(replicas, 0);
  std::vector<std::uint64_t> events(replicas, 0);
  parallel_for(std::size_t(replicas), [&](std::size_t r) {
    auto ic = initial_condition(init, plan, kernel, K, seed, r);
    out.X0[r] = ic.X0;
    out.M[r] = ic.M;
    RunOptions opt;
    const auto traj = run(plan, kernel, std::move(ic.cfg), times, seed, r, opt);
    events[r] = traj.n_events;
    for (std::size_t t = 0; t < times.size(); ++t) {
      const auto& h = traj.samples[t + 1].field;
      for (std::size_t o = 0; o < lattice.size(); ++o) e.values[o][t][r] = pair_field(h, lattice[o], plan);
    }
  });
  for (auto v : events) out.events += v;
  return out;
}

inline SCHParams macro_params(const ExperimentConfig& c, const ScalingPlan& plan, double mbar) {
  SCHParams p;
  switch (c.coefficients) {
    case CoefficientSource::theorem:
      p = SCHParams::from_plan(plan);
      if (c.spde_nu > 0.0) p.nu = c.spde_nu;
      break;
    case CoefficientSource::effective: p = SCHParams::effective(plan, mbar, false); break;
    case CoefficientSource::effective_finite: p = SCHParams::effective(plan, mbar, true); break;
  }
  p.n_modes = c.spde_modes;
  p.dt = c.spde_dt;
  p.T = c.times.empty() ? 0.0 : c.times.back();
  p.stepper = c.stepper;
  return p;
}

// SPDE replica r starts from X0[r] (the pairing rule for the initial laws).
inline Ensemble run_macro_ensemble(const SCHParams& p, const std::vector<SpectralField>& X0, std::uint64_t seed,
                                   const std::vector<double>& times, const std::vector<std::string>& phis) {
  Ensemble e;
  e.observables = ensemble_observables(phis);
  e.times = times;
  const std::size_t R = X0.size();
  e.values.assign(e.observables.size(), std::vector<std::vector<double>>(times.size(), std::vector<double>(R)));
  std::vector<SpectralField> spectra;
  for (const auto& o : e.observables) spectra.push_back(test_spectrum(test_function(o), p.n_modes));
  std::vector<std::uint64_t> steps;
  std::uint64_t stride = 0;
  for (double t : times) {
    steps.push_back(std::uint64_t(std::llround(t / p.dt)));
    stride = std::gcd(stride, steps.back());
  }
  parallel_for(R, [&](std::size_t r) {
    SCHParams q = p;
    q.mass = X0[r].at(0).real();
    q.T = times.back();
    SolveOptions opt;
    opt.diagnostics = false;
    opt.record_every = stride;
    opt.replica = r;
    const auto path = solve(q, X0[r], seed, opt);
    for (std::size_t t = 0; t < times.size(); ++t) {
      const auto X = path.states.at(steps[t] / stride).X();
      for (std::size_t o = 0; o < spectra.size(); ++o) e.values[o][t][r] = pair_spectral(X, spectra[o]);
    }
  });
  return e;
}

// ------------------------------------------------------------ comparison

struct ComparisonCell {
  std::string phi;
  double t = 0.0;
  double micro_mean = 0.0, micro_sd = 0.0, macro_mean = 0.0, macro_sd = 0.0;
  double mean_diff = 0.0, sd_diff = 0.0;  // micro - macro
  Interval mean_diff_ci, sd_diff_ci;
  double moment_gap = 0.0;  // |mean diff| + |sd diff|
  Interval moment_gap_ci;
  double ks = 0.0;  // on standardized samples
  bool self_consistent() const { return mean_diff_ci.contains(0.0) && sd_diff_ci.contains(0.0); }
};

struct ComparisonReport {
  double gamma = 0.0;
  std::vector<ComparisonCell> cells;
  std::vector<double> h3_proxy;  // per time: sum_k (1 + q^2)^-3 |E|X_k|^2 micro - macro|, |k| <= 4
  std::size_t lag1_violations = 0;
  std::size_t lag1_checks = 0;
  const ComparisonCell& cell(const std::string& phi, double t) const {
    for (const auto& c : cells)
      if (c.phi == phi && std::abs(c.t - t) < 1e-12) return c;
    throw std::invalid_argument("no comparison cell for " + phi);
  }
};

inline double sample_sd(const std::vector<double>& v) { return std::sqrt(variance(v)); }

inline std::vector<double> standardized(const std::vector<double>& v) {
  const double m = mean(v), s = sample_sd(v);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = s > 0.0 ? (v[i] - m) / s : 0.0;
  return out;
}

// Correlation of consecutive replicas, a sanity check on stream independence.
inline double lag1_correlation(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  const double m = mean(v);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    den += (v[i] - m) * (v[i] - m);
    if (i + 1 < v.size()) num += (v[i] - m) * (v[i + 1] - m);
  }
  return den > 0.0 ? num / den : 0.0;
}

// Two-sample percentile bootstrap of a statistic of (a, b).
inline Interval bootstrap_two(const std::vector<double>& a, const std::vector<double>& b,
                              const std::function<double(const std::vector<double>&, const std::vector<double>&)>& stat,
                              double level, int resamples = 2000, std::uint64_t seed = 0xc0ffee) {
  Interval out;
  out.estimate = stat(a, b);
  Philox4x32 g(seed, 0xb2);
  std::vector<double> reps(resamples), ra(a.size()), rb(b.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& x : ra) x = a[g.below(a.size())];
    for (auto& x : rb) x = b[g.below(b.size())];
    reps[r] = stat(ra, rb);
  }
  std::sort(reps.begin(), reps.end());
  const double q = 0.5 * (1.0 - level);
  out.lo = reps[std::min<std::size_t>(reps.size() - 1, std::size_t(q * double(resamples)))];
  out.hi = reps[std::min<std::size_t>(reps.size() - 1, std::size_t((1.0 - q) * double(resamples)))];
  return out;
}

// level: confidence of each interval. The self-test uses a Bonferroni level
// across all (phi, t) cells and both moments.
inline ComparisonReport compare(const Ensemble& micro, const Ensemble& macro, const std::vector<std::string>& phis,
                                const std::vector<double>& times, double gamma, std::size_t min_replicas = 32,
                                double level = 0.95) {
  if (micro.replicas() < min_replicas || macro.replicas() < min_replicas)
    throw std::invalid_argument("ensembles too small: need at least " + std::to_string(min_replicas) + " replicas");
  ComparisonReport rep;
  rep.gamma = gamma;
  auto tindex = [](const Ensemble& e, double t) {
    for (std::size_t i = 0; i < e.times.size(); ++i)
      if (std::abs(e.times[i] - t) < 1e-12) return i;
    throw std::invalid_argument("ensemble lacks time " + std::to_string(t));
  };
  for (const auto& phi : phis)
    for (double t : times) {
      const auto& a = micro.at(phi, tindex(micro, t));
      const auto& b = macro.at(phi, tindex(macro, t));
      ComparisonCell c;
      c.phi = phi;
      c.t = t;
      c.micro_mean = mean(a);
      c.micro_sd = sample_sd(a);
      c.macro_mean = mean(b);
      c.macro_sd = sample_sd(b);
      c.mean_diff = c.micro_mean - c.macro_mean;
      c.sd_diff = c.micro_sd - c.macro_sd;
      c.mean_diff_ci = bootstrap_two(a, b, [](const auto& x, const auto& y) { return mean(x) - mean(y); }, level);
      c.sd_diff_ci = bootstrap_two(a, b, [](const auto& x, const auto& y) { return sample_sd(x) - sample_sd(y); }, level);
      c.moment_gap = std::abs(c.mean_diff) + std::abs(c.sd_diff);
      c.moment_gap_ci = bootstrap_two(
          a, b,
          [](const auto& x, const auto& y) {
            return std::abs(mean(x) - mean(y)) + std::abs(sample_sd(x) - sample_sd(y));
          },
          level);
      c.ks = ks_distance(standardized(a), standardized(b));
      rep.cells.push_back(c);
      const double rho = lag1_correlation(a);
      ++rep.lag1_checks;
      if (std::abs(rho) >= 4.0 / std::sqrt(double(a.size()))) ++rep.lag1_violations;
    }
  for (double t : times) {
    const auto ti = tindex(micro, t), tj = tindex(macro, t);
    double s = 0.0;
    for (int k = 1; k <= 4; ++k) {
      const auto& mc = micro.at("e" + std::to_string(k), ti);
      const auto& ms = micro.at("s" + std::to_string(k), ti);
      const auto& Mc = macro.at("e" + std::to_string(k), tj);
      const auto& Ms = macro.at("s" + std::to_string(k), tj);
      double e1 = 0.0, e2 = 0.0;
      for (std::size_t r = 0; r < mc.size(); ++r) e1 += (mc[r] * mc[r] + ms[r] * ms[r]) / double(mc.size());
      for (std::size_t r = 0; r < Mc.size(); ++r) e2 += (Mc[r] * Mc[r] + Ms[r] * Ms[r]) / double(Mc.size());
      const double q2 = std::pow(two_pi * k, 2);
      s += std::abs(e1 - e2) / std::pow(1.0 + q2, 3);
    }
    rep.h3_proxy.push_back(s);
  }
  return rep;
}

inline double bonferroni_level(std::size_t tests, double family = 0.95) {
  return 1.0 - (1.0 - family) / double(std::max<std::size_t>(1, tests));
}

inline void write_comparison_csv_header(std::ostream& os) {
  os << "gamma,phi,t,micro_mean,micro_sd,macro_mean,macro_sd,mean_diff,mean_diff_lo,mean_diff_hi,sd_diff,"
        "sd_diff_lo,sd_diff_hi,moment_gap,moment_gap_lo,moment_gap_hi,ks\n";
}
inline void write_comparison_csv(std::ostream& os, const ComparisonReport& r) {
  os.precision(10);
  for (const auto& c : r.cells)
    os << r.gamma << ',' << c.phi << ',' << c.t << ',' << c.micro_mean << ',' << c.micro_sd << ',' << c.macro_mean << ','
       << c.macro_sd << ',' << c.mean_diff << ',' << c.mean_diff_ci.lo << ',' << c.mean_diff_ci.hi << ',' << c.sd_diff
       << ',' << c.sd_diff_ci.lo << ',' << c.sd_diff_ci.hi << ',' << c.moment_gap << ',' << c.moment_gap_ci.lo << ','
       << c.moment_gap_ci.hi << ',' << c.ks << '\n';
}

// Gap trend along a gamma sequence given in decreasing order: a cell counts
// when its moment gap does not increase from one gamma to the next.
struct TrendRow {
  std::string phi;
  double t = 0.0;
  std::vector<double> gaps;
  bool nonincreasing = false;
};

struct TrendTable {
  std::vector<double> gammas;
  std::vector<TrendRow> rows;
  double fraction() const {
    if (rows.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& r : rows) ok += r.nonincreasing;
    return double(ok) / double(rows.size());
  }
};

inline TrendTable trend_table(const std::vector<ComparisonReport>& reports, const std::vector<std::string>& phis,
                              const std::vector<double>& times) {
  TrendTable tt;
  for (const auto& r : reports) tt.gammas.push_back(r.gamma);
  for (std::size_t i = 1; i < tt.gammas.size(); ++i)
    if (!(tt.gammas[i] < tt.gammas[i - 1])) throw std::invalid_argument("trend needs decreasing gammas");
  for (const auto& phi : phis)
    for (double t : times) {
      TrendRow row{phi, t, {}, true};
      for (const auto& r : reports) row.gaps.push_back(r.cell(phi, t).moment_gap);
      for (std::size_t i = 1; i < row.gaps.size(); ++i) row.nonincreasing = row.nonincreasing && row.gaps[i] <= row.gaps[i - 1];
      tt.rows.push_back(row);
    }
  return tt;
}

inline void write_trend_csv(std::ostream& os, const TrendTable& tt) {
  os << "phi,t";
  for (double g : tt.gammas) os << ",gap_gamma_" << g;
  os << ",nonincreasing\n";
  os.precision(10);
  for (const auto& r : tt.rows) {
    os << r.phi << ',' << r.t;
    for (double g : r.gaps) os << ',' << g;
    os << ',' << (r.nonincreasing ? 1 : 0) << '\n';
  }
}

// Exponential fit of the replica-mean of one observable: log|mean| vs t.
inline double fitted_decay_rate(const Ensemble& e, const std::string& phi) {
  std::vector<double> x, y;
  const auto o = e.index_of(phi);
  for (std::size_t t = 0; t < e.times.size(); ++t) {
    const double m = mean(e.values[o][t]);
    if (m > 0.0) {
      x.push_back(e.times[t]);
      y.push_back(std::log(m));
    }
  }
  if (x.size() < 2) throw std::invalid_argument("mean trajectory not positive at two times");
  return -fit_slope(x, y);
}

// ----------------------------------------------------------------- plots

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("missing column '" + name + "'");
    return std::size_t(it - header.begin());
  }
};

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) throw std::invalid_argument("empty input " + path);
  for (const auto& h : detail::split(detail::trim(line))) t.header.push_back(h);
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
    if (cells.size() != t.header.size()) throw std::invalid_argument("ragged row in " + path);
    t.rows.push_back(std::move(cells));
  }
  if (t.rows.empty()) throw std::invalid_argument("empty input " + path);
  return t;
}

struct PlotSpec {
  std::string x, y;
  std::string series;  // optional grouping column
  bool logx = false, logy = false;
  std::string title;
};

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

inline std::vector<PlotSeries> plot_series(const Table& t, const PlotSpec& spec) {
  const auto cx = t.column(spec.x), cy = t.column(spec.y);
  const bool grouped = !spec.series.empty();
  const std::size_t cs = grouped ? t.column(spec.series) : 0;
  std::vector<PlotSeries> out;
  for (const auto& row : t.rows) {
    const std::string name = grouped ? row[cs] : spec.y;
    auto it = std::find_if(out.begin(), out.end(), [&](const PlotSeries& s) { return s.name == name; });
    if (it == out.end()) {
      out.push_back({name, {}, {}});
      it = out.end() - 1;
    }
    const double x = detail::parse_num(spec.x, row[cx]), y = detail::parse_num(spec.y, row[cy]);
    if ((spec.logx && !(x > 0.0)) || (spec.logy && !(y > 0.0))) continue;
    it->x.push_back(x);
    it->y.push_back(y);
  }
  return out;
}

inline std::string render_svg(const std::vector<PlotSeries>& series, const PlotSpec& spec) {
  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  auto tx = [&](double v) { return spec.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.logy ? std::log10(v) : v; };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (x0 > x1) throw std::invalid_argument("no plottable points");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << L << "\" y=\"25\" font-size=\"14\">" << spec.title << "</text>\n";
  os << "<text x=\"" << (W - R + L) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"12\" text-anchor=\"middle\">"
     << (spec.logx ? "log10 " : "") << spec.x << "</text>\n";
  os << "<text x=\"15\" y=\"" << (H - B + T) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 15 " << (H - B + T) / 2
     << ")\" text-anchor=\"middle\">" << (spec.logy ? "log10 " : "") << spec.y << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4, fy = y0 + (y1 - y0) * i / 4;
    const double sx = L + (W - L - R) * i / 4, sy = H - B - (H - T - B) * i / 4;
    os << "<text x=\"" << sx << "\" y=\"" << H - B + 15 << "\" font-size=\"10\" text-anchor=\"middle\">" << fx << "</text>\n";
    os << "<text x=\"" << L - 5 << "\" y=\"" << sy + 3 << "\" font-size=\"10\" text-anchor=\"end\">" << fy << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = colors[k % 8];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\"" << col << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 15 + 15 * k << "\" font-size=\"11\" fill=\"" << col << "\">"
       << s.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// Writes <prefix>.dat (x y series, gnuplot-ready) and <prefix>.svg. Nothing is
// written unless the input parses and yields points.
inline std::vector<std::string> plot_emit(const std::string& csv_path, const PlotSpec& spec, const std::string& prefix) {
  const Table t = read_csv(csv_path);
  const auto series = plot_series(t, spec);
  const std::string svg = render_svg(series, spec);
  std::ostringstream dat;
  dat.precision(12);
  dat << "# x y series\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) dat << s.x[i] << ' ' << s.y[i] << ' ' << s.name << '\n';
    dat << "\n\n";
  }
  std::ofstream(prefix + ".dat") << dat.str();
  std::ofstream(prefix + ".svg") << svg;
  return {prefix + ".dat", prefix + ".svg"};
}

// ------------------------------------------------------------ experiments

struct RunResult {
  std::filesystem::path dir;
  std::vector<std::string> files;
  bool assertions_passed = true;
  std::vector<std::string> messages;
};

namespace detail {

inline void write_file(RunResult& res, const std::string& name, const std::string& content) {
  std::ofstream out(res.dir / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (res.dir / name).string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + (res.dir / name).string());
  res.files.push_back(name);
}

inline void write_manifest(RunResult& res, const ExperimentConfig& c) {
  nlohmann::ordered_json m;
  m["config_hash"] = config_hash(c);
  m["code_version"] = IKK_VERSION;
  m["run_kind"] = to_string(c.run_kind);
  m["seeds"] = {{"base", c.seed}, {"replicas", c.replicas}};
  m["files"] = res.files;
  m["assertions_passed"] = res.assertions_passed;
  m["messages"] = res.messages;
  std::ofstream(res.dir / "manifest.json") << m.dump(2) << '\n';
}

}  // namespace detail

inline RunResult run_experiment(const ExperimentConfig& c) {
  validate(c);
  RunResult res;
  res.dir = c.output;
  std::filesystem::create_directories(res.dir);
  detail::write_file(res, "config.txt", to_text(c));
  switch (c.run_kind) {
    case RunKind::simulate: {
      const auto plan = plan_for(c);
      const auto kernel = KacKernel::build(c.profile, plan.gamma, plan.N);
      std::vector<std::string> out(c.replicas);
      std::vector<char> conserved(c.replicas, 1);
      std::vector<std::vector<double>> lattice;
      for (const auto& p : c.phis) lattice.push_back(sample_on_lattice(test_function(p).f, kernel.size()));
      parallel_for(std::size_t(c.replicas), [&](std::size_t r) {
        auto ic = initial_condition(c.initial, plan, kernel, 1, c.seed, r);
        RunOptions opt;
        opt.keep_spins = false;
        const auto traj = run(plan, kernel, std::move(ic.cfg), c.times, c.seed, r, opt);
        std::ostringstream os;
        os.precision(17);
        os << "t_macro,observable_name,value\n";
        for (const auto& s : traj.samples) {
          if (s.total_mag != traj.samples.front().total_mag) conserved[r] = 0;
          os << detail::fmt_double(s.t_macro) << ",total_mag," << s.total_mag << '\n';
          double mass = 0.0;
          for (double h : s.field) mass += h;
          os << detail::fmt_double(s.t_macro) << ",mass," << plan.eps * mass / plan.delta << '\n';
          for (std::size_t o = 0; o < lattice.size(); ++o)
            os << detail::fmt_double(s.t_macro) << ',' << c.phis[o] << ',' << pair_field(s.field, lattice[o], plan) << '\n';
        }
        if (c.write_field) {
          os << "# field\nt_macro,site_index,X_gamma\n";
          for (const auto& s : traj.samples)
            for (std::size_t i = 0; i < s.field.size(); ++i)
              os << detail::fmt_double(s.t_macro) << ',' << i << ',' << s.field[i] / plan.delta << '\n';
        }
        out[r] = os.str();
      });
      for (std::int64_t r = 0; r < c.replicas; ++r)
        detail::write_file(res, "simulate_seed" + std::to_string(c.seed) + "_rep" + std::to_string(r) + ".csv", out[r]);
      for (char ok : conserved)
        if (!ok) {
          res.assertions_passed = false;
          res.messages.push_back("total magnetization changed along a trajectory");
        }
      break;
    }
    case RunKind::spde: {
      const auto plan = plan_for(c);
      const auto kernel = KacKernel::build(c.profile, plan.gamma, plan.N);
      std::vector<std::string> diag(c.replicas), path(c.replicas);
      std::vector<double> mass_drift(c.replicas, 0.0);
      parallel_for(std::size_t(c.replicas), [&](std::size_t r) {
        auto ic = initial_condition(c.initial, plan, kernel, c.spde_modes, c.seed, r);
        SCHParams p = macro_params(c, plan, ic.mbar);
        p.mass = ic.X0.at(0).real();
        SolveOptions opt;
        opt.replica = r;
        opt.record_every = std::uint64_t(std::max<long long>(1, std::llround(c.times.front() / c.spde_dt)));
        const auto sol = solve(p, ic.X0, c.seed, opt);
        std::ostringstream a, b;
        write_diagnostics_csv(a, sol.diagnostics);
        write_path_csv(b, sol);
        diag[r] = a.str();
        path[r] = b.str();
        for (const auto& d : sol.diagnostics) mass_drift[r] = std::max(mass_drift[r], std::abs(d.mass - p.mass));
      });
      for (std::int64_t r = 0; r < c.replicas; ++r) {
        const std::string stem = "spde_seed" + std::to_string(c.seed) + "_rep" + std::to_string(r);
        detail::write_file(res, stem + "_diagnostics.csv", diag[r]);
        detail::write_file(res, stem + "_path.csv", path[r]);
      }
      for (double d : mass_drift)
        if (d > 1e-13) {
          res.assertions_passed = false;
          res.messages.push_back("SPDE mass drifted");
        }
      break;
    }
    case RunKind::oracle: {
      const auto plan = plan_for(c);
      const auto kernel = KacKernel::build(c.profile, plan.gamma, plan.N);
      std::ostringstream os;
      os.precision(17);
      os << "L,m,phi_enumerated,phi_closed_form,tv_bound\n";
      for (int L = 1; L <= c.oracle_L_max; ++L)
        for (const auto& row : oracle_table(L, kernel, c.beta)) {
          os << row.L << ',' << row.m << ',' << row.phi_enumerated << ',' << row.phi_closed_form << ',' << row.tv_bound
             << '\n';
          if (std::abs(row.phi_enumerated - row.phi_closed_form) > row.tv_bound + 1e-12) {
            res.assertions_passed = false;
            res.messages.push_back("Phi gap exceeds 4 TV at L=" + std::to_string(L));
          }
        }
      detail::write_file(res, "oracle_phi.csv", os.str());
      std::ostringstream en;
      en.precision(17);
      // rings too small for a Kac kernel: nearest-neighbour block average
      en << "N,M,beta,entropy_uniform_vs_canonical\n";
      for (std::int64_t n = 2; n <= 6; ++n) {
        const auto k = KacKernel::custom(n, {1.0, 1.0, 1.0}, 1.0 / 3.0);
        en << n << ",1," << c.beta << ',' << initial_entropy_small(k, c.beta, 1) << '\n';
      }
      detail::write_file(res, "initial_entropy.csv", en.str());
      break;
    }
    case RunKind::symbol_audit: {
      std::ostringstream os;
      os.precision(17);
      os << "inverse_eps,k_max,c,C,C_consistency\n";
      std::vector<SymbolConstants> all;
      for (auto ie : c.audit_inverse_eps) {
        const auto s = symbol_check(1.0 / double(ie), c.audit_k_max);
        all.push_back(s);
        os << ie << ',' << c.audit_k_max << ',' << s.c << ',' << s.C << ',' << s.C_consistency << '\n';
      }
      auto spread = [&](auto f) {
        double lo = 1e300, hi = 0.0;
        for (const auto& s : all) {
          lo = std::min(lo, f(s));
          hi = std::max(hi, f(s));
        }
        return hi / lo;
      };
      if (spread([](const SymbolConstants& s) { return s.c; }) >= 2.0 ||
          spread([](const SymbolConstants& s) { return s.C; }) >= 2.0 ||
          spread([](const SymbolConstants& s) { return s.C_consistency; }) >= 2.0) {
        res.assertions_passed = false;
        res.messages.push_back("symbol constants vary by 2x or more across eps");
      }
      detail::write_file(res, "symbol_audit.csv", os.str());
      break;
    }
    case RunKind::compare: {
      std::vector<ComparisonReport> reports;
      std::ostringstream cmp;
      write_comparison_csv_header(cmp);
      std::ostringstream self;
      self << "gamma,phi,t,mean_diff,mean_diff_lo,mean_diff_hi,sd_diff,sd_diff_lo,sd_diff_hi,within_ci\n";
      for (std::size_t g = 0; g < c.compare_gammas.size(); ++g) {
        const double gamma = c.compare_gammas[g];
        const auto plan = plan_for(c, gamma, c.compare_N.empty() ? 0 : c.compare_N[g]);
        const auto kernel = KacKernel::build(c.profile, plan.gamma, plan.N);
        const auto seed = mix64(c.seed + 0x100 * g);
        const auto micro = run_micro_ensemble(plan, kernel, c.initial, c.spde_modes, c.replicas, seed, c.times, c.phis);
        const SCHParams p = macro_params(c, plan, c.initial.mbar);
        const auto macro = run_macro_ensemble(p, micro.X0, seed, c.times, c.phis);
        // self-test: a second SPDE ensemble from the same initial data, new noise
        const auto macro2 = run_macro_ensemble(p, micro.X0, mix64(seed + 1), c.times, c.phis);
        const double lvl = bonferroni_level(2 * c.phis.size() * c.times.size());
        const auto st = compare(macro2, macro, c.phis, c.times, gamma, std::size_t(c.min_replicas), lvl);
        bool self_ok = true;
        for (const auto& cell : st.cells) {
          self_ok = self_ok && cell.self_consistent();
          self << gamma << ',' << cell.phi << ',' << cell.t << ',' << cell.mean_diff << ',' << cell.mean_diff_ci.lo << ','
               << cell.mean_diff_ci.hi << ',' << cell.sd_diff << ',' << cell.sd_diff_ci.lo << ',' << cell.sd_diff_ci.hi
               << ',' << (cell.self_consistent() ? 1 : 0) << '\n';
        }
        if (!self_ok) {
          res.assertions_passed = false;
          res.messages.push_back("macro self-test failed at gamma=" + detail::fmt_double(gamma));
          continue;  // no micro-vs-macro claim without a passing self-test
        }
        reports.push_back(compare(micro.ensemble, macro, c.phis, c.times, gamma, std::size_t(c.min_replicas)));
        write_comparison_csv(cmp, reports.back());
      }
      detail::write_file(res, "comparison.csv", cmp.str());
      detail::write_file(res, "self_test.csv", self.str());
      if (reports.size() == c.compare_gammas.size() && reports.size() >= 2) {
        const auto tt = trend_table(reports, c.phis, c.times);
        std::ostringstream tr;
        write_trend_csv(tr, tt);
        detail::write_file(res, "trend.csv", tr.str());
        res.messages.push_back("trend fraction " + detail::fmt_double(tt.fraction()));
      }
      break;
    }
  }
  detail::write_manifest(res, c);
  return res;
}

}  // namespace ikk
