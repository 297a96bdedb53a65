#pragma once

// Event-driven simulation of the Kawasaki exchange chain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikk/combinatorics.hpp"
#include "ikk/kernel.hpp"
#include "ikk/lattice.hpp"
#include "ikk/plan.hpp"
#include "ikk/rng.hpp"
#include "ikk/sum_tree.hpp"

namespace ikk {

// sum_tree: rejection-free selection over all bond rates.
// uniformized: bonds proposed uniformly at rate n c_plus and accepted with
// probability c_i / c_plus (thinning); exact in law, cheaper when the kernel
// support is wide because only accepted swaps touch the field.
enum class Sampler { sum_tree, uniformized };

inline Sampler parse_sampler(const std::string& s) {
  if (s == "sum_tree") return Sampler::sum_tree;
  if (s == "uniformized") return Sampler::uniformized;
  throw std::invalid_argument("unknown sampler: " + s);
}

struct ChainOptions {
  Sampler sampler = Sampler::sum_tree;
  bool debug_audit = false;
  std::uint64_t event_cap = 1'000'000'000ull;
  std::uint64_t refresh_every = SpinConfig::kDefaultRefresh;
};

struct StepResult {
  double dt = 0.0;
  std::int64_t bond = -1;
  int d = 0;           // sigma_i - sigma_{i+1} before the event
  bool fired = false;  // false for a rejected thinning proposal
};

class KawasakiChain {
 public:
  KawasakiChain(const KacKernel& kernel, double beta, SpinConfig cfg, std::uint64_t seed, std::uint64_t replica = 0,
                ChainOptions opt = {})
      : kernel_(&kernel), beta_(beta), cfg_(std::move(cfg)), rng_(seed, replica), opt_(opt) {
    if (beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
    if (cfg_.size() != kernel.size()) throw std::invalid_argument("configuration and kernel sizes differ");
    cfg_.set_refresh_every(opt_.refresh_every);
    if (!cfg_.cache_valid() || cfg_.kernel_fingerprint() != kernel.fingerprint()) cfg_.refresh(kernel);
    const double B = 2.0 * kernel.total_variation() + 4.0 * std::abs(exchange_offset(kernel));
    c_plus_ = logistic(-beta * B);
    offset_ = exchange_offset(kernel);
    if (opt_.sampler == Sampler::sum_tree) {
      std::vector<double> rates(cfg_.size());
      for (std::int64_t i = 0; i < cfg_.size(); ++i) rates[i] = compute_rate(i);
      index_.assign(rates);
    }
  }

  const KacKernel& kernel() const { return *kernel_; }
  double beta() const { return beta_; }
  const SpinConfig& config() const { return cfg_; }
  double time() const { return tau_; }
  std::uint64_t events() const { return events_; }
  std::uint64_t jumps() const { return jumps_; }
  Sampler sampler() const { return opt_.sampler; }
  double c_plus() const { return c_plus_; }
  Philox4x32& rng() { return rng_; }

  double compute_rate(std::int64_t i) const {
    const int d = cfg_.spin(i) - cfg_.spin(i + 1);
    if (d == 0) return 0.5;
    return logistic(beta_ * (d * (cfg_.h(i) - cfg_.h(i + 1)) + double(d * d) * offset_));
  }

  double rate(std::int64_t i) const {
    return opt_.sampler == Sampler::sum_tree ? index_.rate(wrap(i, cfg_.size())) : compute_rate(i);
  }

  double total_rate() const {
    return opt_.sampler == Sampler::sum_tree ? index_.total() : c_plus_ * double(cfg_.size());
  }

  // Bonds whose rate may have changed in the last state-changing event.
  // first is a bond index (possibly negative before wrapping); count may be n.
  std::pair<std::int64_t, std::int64_t> changed_range() const { return changed_; }

  double next_holding_time() { return rng_.exponential(total_rate()); }

  // Advance the clock without an event (memoryless truncation at sample times).
  void advance_idle(double dt) { tau_ += dt; }

  StepResult fire(double dt) {
    StepResult r;
    r.dt = dt;
    tau_ += dt;
    changed_ = {0, 0};
    std::int64_t b;
    if (opt_.sampler == Sampler::sum_tree) {
      b = static_cast<std::int64_t>(index_.sample(rng_.uniform() * index_.total()));
    } else {
      b = static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(cfg_.size())));
      if (rng_.uniform() * c_plus_ >= compute_rate(b)) {
        r.bond = b;
        return r;
      }
    }
    r.bond = b;
    r.fired = true;
    r.d = cfg_.spin(b) - cfg_.spin(b + 1);
    if (++events_ > opt_.event_cap) throw std::runtime_error("event cap exceeded");
    if (r.d != 0) {
      apply_exchange(cfg_, *kernel_, b);
      ++jumps_;
      const std::int64_t n = cfg_.size(), R = kernel_->support();
      if (2 * R + 3 >= n) {
        changed_ = {0, n};
      } else {
        changed_ = {b - R - 1, 2 * R + 3};
      }
      if (opt_.sampler == Sampler::sum_tree) {
        for (std::int64_t u = 0; u < changed_.second; ++u) {
          const std::int64_t j = wrap(changed_.first + u, n);
          index_.update(static_cast<std::size_t>(j), compute_rate(j));
        }
      }
      if (opt_.debug_audit) audit_or_throw();
    }
    return r;
  }

  StepResult step() { return fire(next_holding_time()); }

  // Full recomputation of every rate against the maintained index.
  double audit() const {
    if (opt_.sampler != Sampler::sum_tree) return 0.0;
    double worst = index_.audit();
    SpinConfig fresh = cfg_;
    fresh.refresh(*kernel_);
    for (std::int64_t i = 0; i < cfg_.size(); ++i)
      worst = std::max(worst, std::abs(index_.rate(i) - bond_local(fresh, *kernel_, beta_, i).rate));
    return worst;
  }

 private:
  void audit_or_throw() const {
    const double a = audit();
    if (a > 1e-9) throw std::logic_error("rate index out of sync: " + std::to_string(a));
  }

  const KacKernel* kernel_;
  double beta_;
  SpinConfig cfg_;
  Philox4x32 rng_;
  ChainOptions opt_;
  RateIndex index_;
  double c_plus_ = 1.0;
  double offset_ = 0.0;
  double tau_ = 0.0;
  std::uint64_t events_ = 0, jumps_ = 0;
  std::pair<std::int64_t, std::int64_t> changed_{0, 0};
};

// Streaming hooks. on_interval reports a stretch of microscopic time over which
// the state was constant; on_jump follows a state-changing swap.
class Observer {
 public:
  virtual ~Observer() = default;
  virtual void on_start(const KawasakiChain&) {}
  virtual void on_interval(const KawasakiChain&, double /*dtau*/) {}
  virtual void on_jump(const KawasakiChain&, std::int64_t /*bond*/, int /*d*/) {}
  virtual void on_sample(const KawasakiChain&, double /*t_macro*/) {}
};

struct Event {
  double t_micro;
  std::int64_t bond;
};

struct Sample {
  double t_macro = 0.0;
  double t_micro = 0.0;
  std::int64_t total_mag = 0;
  std::vector<double> field;         // smoothed field h
  std::vector<std::int8_t> spins;    // only when requested
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  double t_end = 0.0;  // microscopic horizon
  std::uint64_t n_events = 0;
  std::uint64_t n_jumps = 0;
  std::vector<Event> events;
  std::vector<Sample> samples;
};

struct RunOptions {
  ChainOptions chain;
  bool log_events = false;
  bool keep_field = true;
  bool keep_spins = false;
  std::vector<Observer*> observers;
};

inline Sample take_sample(const KawasakiChain& ch, double t_macro, const RunOptions& opt) {
  Sample s;
  s.t_macro = t_macro;
  s.t_micro = ch.time();
  s.total_mag = ch.config().total_mag();
  if (opt.keep_field) s.field = ch.config().smoothed();
  if (opt.keep_spins) s.spins = ch.config().spins();
  return s;
}

// Runs the chain to the last scheduled macroscopic time, sampling the
// piecewise-constant state exactly at t/alpha. The initial state is always
// sample 0.
inline Trajectory run(const ScalingPlan& plan, const KacKernel& kernel, SpinConfig cfg0,
                      const std::vector<double>& schedule, std::uint64_t seed, std::uint64_t replica = 0,
                      const RunOptions& opt = {}) {
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] < 0.0) throw std::invalid_argument("sample times must be nonnegative");
    if (i > 0 && schedule[i] < schedule[i - 1]) throw std::invalid_argument("schedule must be sorted");
  }
  KawasakiChain ch(kernel, plan.beta, std::move(cfg0), seed, replica, opt.chain);
  Trajectory tr;
  tr.seed = seed;
  tr.replica = replica;
  for (auto* o : opt.observers) o->on_start(ch);
  tr.samples.push_back(take_sample(ch, 0.0, opt));
  for (auto* o : opt.observers) o->on_sample(ch, 0.0);
  for (double t_macro : schedule) {
    if (t_macro == 0.0) continue;
    const double target = plan.macro_to_micro(t_macro);
    while (true) {
      const double dt = ch.next_holding_time();
      if (ch.time() + dt > target) {
        const double rest = target - ch.time();
        for (auto* o : opt.observers) o->on_interval(ch, rest);
        ch.advance_idle(rest);
        break;
      }
      for (auto* o : opt.observers) o->on_interval(ch, dt);
      const StepResult r = ch.fire(dt);
      if (r.fired && opt.log_events) tr.events.push_back({ch.time(), r.bond});
      if (r.fired && r.d != 0)
        for (auto* o : opt.observers) o->on_jump(ch, r.bond, r.d);
    }
    tr.samples.push_back(take_sample(ch, t_macro, opt));
    for (auto* o : opt.observers) o->on_sample(ch, t_macro);
  }
  tr.t_end = ch.time();
  tr.n_events = ch.events();
  tr.n_jumps = ch.jumps();
  return tr;
}

struct StationarityReport {
  double invariance = 0.0;       // ||mu^T L||_inf
  double detailed_balance = 0.0;  // max |mu(s) c_b(s) - mu(s') c_b(s')|
  std::size_t sector_size = 0;
};

// Exact generator on the canonical sector with total magnetization M.
inline StationarityReport stationarity_audit(std::int64_t N_small, std::int64_t M, const KacKernel& kernel,
                                             double beta) {
  const std::int64_t n = 2 * N_small + 1;
  if (kernel.size() != n) throw std::invalid_argument("kernel ring differs from the audited lattice");
  if ((M + n) % 2 != 0 || M < -n || M > n) throw std::invalid_argument("magnetization not realizable");
  const int ups = static_cast<int>((M + n) / 2);
  if (n > 31 || binomial(static_cast<int>(n), ups) > 10000) throw std::invalid_argument("sector too large");
  const auto words = fixed_weight_words(static_cast<int>(n), ups);
  std::map<std::uint32_t, std::size_t> pos;
  for (std::size_t s = 0; s < words.size(); ++s) pos[words[s]] = s;

  auto config_of = [&](std::uint32_t w) {
    std::vector<std::int8_t> sp(n);
    for (std::int64_t i = 0; i < n; ++i) sp[i] = (w >> i) & 1u ? 1 : -1;
    return SpinConfig(std::move(sp), kernel);
  };
  std::vector<double> mu(words.size());
  std::vector<SpinConfig> cfgs;
  cfgs.reserve(words.size());
  double Z = 0.0, h0 = 0.0;
  for (std::size_t s = 0; s < words.size(); ++s) {
    cfgs.push_back(config_of(words[s]));
    const double e = hamiltonian(cfgs.back(), kernel);
    if (s == 0) h0 = e;
    mu[s] = std::exp(-beta * (e - h0));
    Z += mu[s];
  }
  for (double& v : mu) v /= Z;

  StationarityReport rep;
  rep.sector_size = words.size();
  std::vector<double> flux(words.size(), 0.0);
  for (std::size_t s = 0; s < words.size(); ++s) {
    for (std::int64_t b = 0; b < n; ++b) {
      const BondLocal bl = bond_local(cfgs[s], kernel, beta, b);
      if (bl.d == 0) continue;
      const std::int64_t b1 = wrap(b + 1, n);
      std::uint32_t w = words[s];
      const std::uint32_t x = ((w >> b) ^ (w >> b1)) & 1u;
      w ^= (x << b) | (x << b1);
      const std::size_t t = pos.at(w);
      flux[t] += mu[s] * bl.rate;
      flux[s] -= mu[s] * bl.rate;
      const double back = bond_local(cfgs[t], kernel, beta, b).rate;
      rep.detailed_balance = std::max(rep.detailed_balance, std::abs(mu[s] * bl.rate - mu[t] * back));
    }
  }
  for (double f : flux) rep.invariance = std::max(rep.invariance, std::abs(f));
  return rep;
}

}  // namespace ikk
