#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "freqsim/measures.hpp"
#include "freqsim/model.hpp"
#include "freqsim/parallel.hpp"
#include "freqsim/random.hpp"
#include "freqsim/trajectory.hpp"

namespace freqsim {

struct PathConfig {
  double dt = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  std::size_t n_paths = 1;
};

inline void validate(const PathConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw std::invalid_argument("path.dt must be positive");
  if (!(cfg.horizon > 0.0) || !std::isfinite(cfg.horizon))
    throw std::invalid_argument("path.horizon must be positive");
  if (cfg.dt > cfg.horizon) throw std::invalid_argument("path.dt must not exceed path.horizon");
  if (cfg.n_paths == 0) throw std::invalid_argument("path.n_paths must be positive");
}

/// Stopping band for the total mass: a path stops once Z leaves (eps, cap).
struct StopBand {
  double eps = 1e-6;
  double cap = 1e6;
};

inline void validate(const StopBand& b) {
  if (!(b.eps > 0.0) || !(b.cap > b.eps) || !std::isfinite(b.cap))
    throw std::invalid_argument("band: need 0 < eps < cap < inf");
}

inline std::size_t grid_steps(double horizon, double dt) {
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

/// Right end of the k-th Euler step; the last step is shortened to land on the horizon.
inline double grid_time(std::size_t k, double dt, double horizon) {
  return std::min(static_cast<double>(k) * dt, horizon);
}

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Shifted-data estimator: exact for constant samples and stable when the spread is small.
inline Estimate mean_and_se(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_and_se: no samples");
  const double shift = xs.front();
  double s = 0.0, ss = 0.0;
  for (double x : xs) {
    s += x - shift;
    ss += (x - shift) * (x - shift);
  }
  const double n = static_cast<double>(xs.size());
  const double mean = shift + s / n;
  if (xs.size() < 2) return {mean, 0.0};
  const double var = std::max(0.0, (ss - s * s / n) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

/// Sample mean and standard error of value(t)^n across paths.
inline Estimate moment_estimate(std::span<const Trajectory> paths, double t, int n) {
  if (paths.empty()) throw std::invalid_argument("moment_estimate: empty path list");
  if (n < 0) throw std::invalid_argument("moment_estimate: n must be >= 0");
  std::vector<double> xs;
  xs.reserve(paths.size());
  for (const auto& p : paths) {
    if (t > p.end_time() + 1e-12) throw std::invalid_argument("moment_estimate: t beyond path horizon");
    xs.push_back(ipow(p.value_at(t), n));
  }
  return mean_and_se(xs);
}

inline Estimate moment_of_values(std::span<const double> values, int n) {
  std::vector<double> xs;
  xs.reserve(values.size());
  for (double v : values) xs.push_back(ipow(v, n));
  return mean_and_se(xs);
}

// ---------------------------------------------------------------------------------------
// Culled frequency process

/// The exact frequency update of a mass jump w = (w1, w2) applied at total mass z.
inline double frequency_jump(double r, const PushedAtom& a) { return r + (1.0 - r) * a.u1 - r * a.u2; }

/// Superposed Poisson proposal clock of the three jump parts. The proposal rate is
/// mass(nu) + z mass(mu1) + z mass(mu2), independent of the state; mu1 proposals are
/// accepted when a shared uniform v satisfies v < r, mu2 proposals when v < 1 - r.
class FrequencyJumps {
 public:
  struct Draw {
    EventKind kind;
    PushedAtom atom;
    double v;
  };

  explicit FrequencyJumps(const FrequencyDynamics& dyn) {
    atoms_ = {dyn.pushed_nu(), dyn.pushed_mu1(), dyn.pushed_mu2()};
    std::array<double, 3> source_rates{};
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<double> w;
      for (const auto& a : atoms_[s]) w.push_back(a.mass);
      pick_[s] = WeightedIndex(w);
      source_rates[s] = pick_[s].total() * (s == 0 ? 1.0 : dyn.z());
    }
    source_ = WeightedIndex(source_rates);
    rate_ = source_.total();
  }

  double rate() const { return rate_; }

  Draw draw(Stream& rng) const {
    static constexpr EventKind kinds[3] = {EventKind::jump_nu, EventKind::jump_mu1, EventKind::jump_mu2};
    const std::size_t s = source_.draw(rng);
    const PushedAtom& a = atoms_[s][pick_[s].draw(rng)];
    return {kinds[s], a, rng.uniform()};
  }

  static bool accepted(const Draw& d, double r) {
    switch (d.kind) {
      case EventKind::jump_mu1: return d.v < r;
      case EventKind::jump_mu2: return d.v < 1.0 - r;
      default: return true;
    }
  }

 private:
  std::array<std::vector<PushedAtom>, 3> atoms_;
  std::array<WeightedIndex, 3> pick_;
  WeightedIndex source_;
  double rate_ = 0.0;
};

struct FrequencyStats {
  std::size_t clamps = 0;
  double max_overshoot = 0.0;
  std::size_t jumps = 0;
  std::size_t jump_exits = 0;

  void merge(const FrequencyStats& o) {
    clamps += o.clamps;
    max_overshoot = std::max(max_overshoot, o.max_overshoot);
    jumps += o.jumps;
    jump_exits += o.jump_exits;
  }
};

inline constexpr std::size_t kNotOnGrid = std::numeric_limits<std::size_t>::max();

/// Recorder that keeps nothing.
struct NullRecorder {
  void point(double, std::size_t, std::span<const double>) {}
  void event(std::size_t, double, EventKind, double) {}
};

/// Records copy 0 into a Trajectory.
struct TrajectoryRecorder {
  Trajectory* out;
  std::size_t copy = 0;
  void point(double t, std::size_t, std::span<const double> r) { out->push(t, r[copy]); }
  void event(std::size_t c, double t, EventKind kind, double payload) {
    if (c == copy) out->log(t, kind, payload);
  }
};

/// Advances every copy in `r` over [0, horizon] under one shared noise realisation:
/// Euler steps on the dt grid for the raw-event drift and sigma, split at proposal times,
/// with each proposal thinned against each copy's own state.
template <class Recorder>
FrequencyStats run_frequency(const FrequencyDynamics& dyn, const FrequencyJumps& jumps, std::span<double> r,
                             double horizon, double dt, Stream& rng, Recorder&& rec) {
  FrequencyStats stats;
  const std::size_t copies = r.size();
  rec.point(0.0, 0, r);

  auto euler = [&](double h, double t_end) {
    if (h <= 0.0) return;
    const double dw = rng.normal() * std::sqrt(h);
    for (std::size_t c = 0; c < copies; ++c) {
      const double x = r[c];
      double nx = x + dyn.raw_event_drift(x) * h + dyn.sigma(x) * dw;
      double over = 0.0;
      if (nx < 0.0) {
        over = -nx;
        nx = 0.0;
      } else if (nx > 1.0) {
        over = nx - 1.0;
        nx = 1.0;
      }
      if (over > 0.0) {
        ++stats.clamps;
        stats.max_overshoot = std::max(stats.max_overshoot, over);
        rec.event(c, t_end, EventKind::clamp, over);
      }
      r[c] = nx;
    }
  };

  const std::size_t steps = grid_steps(horizon, dt);
  double t = 0.0;
  double next_event = rng.exponential(jumps.rate());
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_next = grid_time(k, dt, horizon);
    while (next_event < t_next) {
      euler(next_event - t, next_event);
      t = next_event;
      const auto d = jumps.draw(rng);
      bool any = false;
      for (std::size_t c = 0; c < copies; ++c) {
        if (!FrequencyJumps::accepted(d, r[c])) continue;
        const double nr = frequency_jump(r[c], d.atom);
        ++stats.jumps;
        if (nr < 0.0 || nr > 1.0) {
          ++stats.jump_exits;
          r[c] = std::clamp(nr, 0.0, 1.0);
        } else {
          r[c] = nr;
        }
        rec.event(c, t, d.kind, r[c]);
        any = true;
      }
      if (any) rec.point(t, kNotOnGrid, r);
      next_event = t + rng.exponential(jumps.rate());
    }
    euler(t_next - t, t_next);
    t = t_next;
    rec.point(t, k, r);
  }
  return stats;
}

inline void check_frequency_inputs(double z, double r0) {
  if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("z must be positive");
  if (!(r0 >= 0.0 && r0 <= 1.0)) throw std::invalid_argument("r0 must lie in [0, 1]");
}

inline Trajectory simulate_culled_frequency(const ModelParams& params, double z, double r0, const PathConfig& cfg,
                                            std::size_t path_index = 0, FrequencyStats* stats = nullptr) {
  check_frequency_inputs(z, r0);
  validate(cfg);
  const FrequencyDynamics dyn(params, z);
  const FrequencyJumps jumps(dyn);
  Stream rng(cfg.seed, stream_tag::kFrequency | path_index);
  Trajectory tr;
  double r[1] = {r0};
  auto s = run_frequency(dyn, jumps, r, cfg.horizon, cfg.dt, rng, TrajectoryRecorder{&tr});
  if (stats) *stats = s;
  return tr;
}

/// cfg.n_paths full trajectories; path i uses stream (seed, frequency tag | i).
inline std::vector<Trajectory> simulate_culled_frequency_paths(const ModelParams& params, double z, double r0,
                                                               const PathConfig& cfg) {
  check_frequency_inputs(z, r0);
  validate(cfg);
  std::vector<Trajectory> out(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](std::size_t i) { out[i] = simulate_culled_frequency(params, z, r0, cfg, i); });
  return out;
}

/// Values R_T at T = cfg.horizon for each path, without storing the paths.
inline std::vector<double> culled_frequency_terminal(const ModelParams& params, double z, double r0,
                                                     const PathConfig& cfg, FrequencyStats* total = nullptr) {
  check_frequency_inputs(z, r0);
  validate(cfg);
  const FrequencyDynamics dyn(params, z);
  const FrequencyJumps jumps(dyn);
  std::vector<double> out(cfg.n_paths);
  std::vector<FrequencyStats> stats(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](std::size_t i) {
    Stream rng(cfg.seed, stream_tag::kFrequency | i);
    double r[1] = {r0};
    stats[i] = run_frequency(dyn, jumps, r, cfg.horizon, cfg.dt, rng, NullRecorder{});
    out[i] = r[0];
  });
  if (total) {
    *total = FrequencyStats{};
    for (const auto& s : stats) total->merge(s);
  }
  return out;
}

/// Two paths from r0 and s0 driven by identical Brownian increments, proposal times,
/// atoms and thinning uniforms.
inline std::pair<Trajectory, Trajectory> coupled_pair(const ModelParams& params, double z, double r0, double s0,
                                                      const PathConfig& cfg, std::size_t path_index = 0) {
  check_frequency_inputs(z, r0);
  check_frequency_inputs(z, s0);
  validate(cfg);
  const FrequencyDynamics dyn(params, z);
  const FrequencyJumps jumps(dyn);
  Stream rng(cfg.seed, stream_tag::kCoupled | path_index);
  std::pair<Trajectory, Trajectory> out;
  struct PairRecorder {
    Trajectory* a;
    Trajectory* b;
    void point(double t, std::size_t, std::span<const double> r) {
      a->push(t, r[0]);
      b->push(t, r[1]);
    }
    void event(std::size_t c, double t, EventKind kind, double payload) {
      (c == 0 ? a : b)->log(t, kind, payload);
    }
  };
  double r[2] = {r0, s0};
  run_frequency(dyn, jumps, r, cfg.horizon, cfg.dt, rng, PairRecorder{&out.first, &out.second});
  return out;
}

/// |R_T^(r0) - R_T^(s0)| for cfg.n_paths coupled pairs.
inline std::vector<double> coupled_separation(const ModelParams& params, double z, double r0, double s0,
                                              const PathConfig& cfg) {
  check_frequency_inputs(z, r0);
  check_frequency_inputs(z, s0);
  validate(cfg);
  const FrequencyDynamics dyn(params, z);
  const FrequencyJumps jumps(dyn);
  std::vector<double> out(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](std::size_t i) {
    Stream rng(cfg.seed, stream_tag::kCoupled | i);
    double r[2] = {r0, s0};
    run_frequency(dyn, jumps, r, cfg.horizon, cfg.dt, rng, NullRecorder{});
    out[i] = std::abs(r[0] - r[1]);
  });
  return out;
}

// ---------------------------------------------------------------------------------------
// Two-type CBI with competition

/// Mass-proportional atom pickers for mu1, mu2 and nu.
class CbiJumps {
 public:
  explicit CbiJumps(const ModelParams& p) : p_(&p) {
    auto build = [](const JumpMeasure& m) {
      std::vector<double> w;
      for (const auto& a : m.atoms()) w.push_back(a.mass);
      return WeightedIndex(w);
    };
    mu1_ = build(p.mu1);
    mu2_ = build(p.mu2);
    nu_ = build(p.nu);
    mean_w1_mu1_ = mean_component(p.mu1, 1);
    mean_w2_mu2_ = mean_component(p.mu2, 2);
  }

  const ModelParams& params() const { return *p_; }
  double mass_mu1() const { return mu1_.total(); }
  double mass_mu2() const { return mu2_.total(); }
  double mass_nu() const { return nu_.total(); }
  double mean_w1_mu1() const { return mean_w1_mu1_; }
  double mean_w2_mu2() const { return mean_w2_mu2_; }

  const Atom& draw(int source, Stream& rng) const {
    switch (source) {
      case 0: return p_->nu.atoms()[nu_.draw(rng)];
      case 1: return p_->mu1.atoms()[mu1_.draw(rng)];
      default: return p_->mu2.atoms()[mu2_.draw(rng)];
    }
  }

 private:
  const ModelParams* p_;
  WeightedIndex mu1_, mu2_, nu_;
  double mean_w1_mu1_ = 0.0;
  double mean_w2_mu2_ = 0.0;
};

struct CbiOutcome {
  double x1 = 0.0;
  double x2 = 0.0;
  double time = 0.0;
  bool stopped = false;
};

struct NullCbiRecorder {
  void point(double, double, double) {}
  void event(double, EventKind, double) {}
};

struct CbiTrajectoryRecorder {
  Trajectory* out;
  void point(double t, double x1, double x2) { out->push(t, x1, x2); }
  void event(double t, EventKind kind, double payload) { out->log(t, kind, payload); }
};

/// Euler-Maruyama for drift and diffusion, compound-Poisson jumps with rates frozen at
/// the left end of each dt step. Times passed to the recorder are offset by t0. Stops at
/// the first step or event time where Z leaves (eps, cap).
template <class Recorder>
CbiOutcome run_cbi(const CbiJumps& jumps, double x1, double x2, double duration, double dt, const StopBand& band,
                   Stream& rng, Recorder&& rec, double t0 = 0.0) {
  const ModelParams& p = jumps.params();
  auto outside = [&](double a, double b) {
    const double zt = a + b;
    return zt <= band.eps || zt >= band.cap;
  };
  rec.point(t0, x1, x2);
  if (outside(x1, x2)) {
    rec.event(t0, EventKind::stop_tau, x1 + x2);
    return {x1, x2, 0.0, true};
  }

  auto euler = [&](double h, double t_end) {
    if (h <= 0.0) return;
    const double sq = std::sqrt(h);
    const double n1 = rng.normal();
    const double n2 = rng.normal();
    const double d1 = p.eta1 + p.b11(x1) + p.b12(x2) - x1 * jumps.mean_w1_mu1();
    const double d2 = p.eta2 + p.b22(x2) + p.b21(x1) - x2 * jumps.mean_w2_mu2();
    double y1 = x1 + d1 * h + std::sqrt(2.0 * p.c1 * x1) * sq * n1;
    double y2 = x2 + d2 * h + std::sqrt(2.0 * p.c2 * x2) * sq * n2;
    if (y1 < 0.0) {
      rec.event(t_end, EventKind::clamp, -y1);
      y1 = 0.0;
    }
    if (y2 < 0.0) {
      rec.event(t_end, EventKind::clamp, -y2);
      y2 = 0.0;
    }
    x1 = y1;
    x2 = y2;
  };

  static constexpr EventKind kinds[3] = {EventKind::jump_nu, EventKind::jump_mu1, EventKind::jump_mu2};
  const std::size_t steps = grid_steps(duration, dt);
  double s = 0.0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double s_next = grid_time(k, dt, duration);
    const std::array<double, 3> rates = {jumps.mass_nu(), x1 * jumps.mass_mu1(), x2 * jumps.mass_mu2()};
    const double total = rates[0] + rates[1] + rates[2];
    const WeightedIndex source(rates);
    double s_ev = s + rng.exponential(total);
    while (s_ev < s_next) {
      euler(s_ev - s, t0 + s_ev);
      s = s_ev;
      const int src = static_cast<int>(source.draw(rng));
      const Atom& a = jumps.draw(src, rng);
      x1 += a.w1;
      x2 += a.w2;
      rec.event(t0 + s, kinds[src], x1 + x2);
      rec.point(t0 + s, x1, x2);
      if (outside(x1, x2)) {
        rec.event(t0 + s, EventKind::stop_tau, x1 + x2);
        return {x1, x2, s, true};
      }
      s_ev = s + rng.exponential(total);
    }
    euler(s_next - s, t0 + s_next);
    s = s_next;
    rec.point(t0 + s, x1, x2);
    if (outside(x1, x2)) {
      rec.event(t0 + s, EventKind::stop_tau, x1 + x2);
      return {x1, x2, s, true};
    }
  }
  return {x1, x2, s, false};
}

/// A start outside the band yields a single point stopped at time 0.
inline Trajectory simulate_cbi(const ModelParams& params, std::pair<double, double> x0, const StopBand& band,
                               const PathConfig& cfg, std::size_t path_index = 0) {
  validate(band);
  validate(cfg);
  if (!(x0.first >= 0.0) || !(x0.second >= 0.0)) throw std::invalid_argument("x0 must be nonnegative");
  const CbiJumps jumps(params);
  Stream rng(cfg.seed, stream_tag::kCbi | path_index);
  Trajectory tr;
  run_cbi(jumps, x0.first, x0.second, cfg.horizon, cfg.dt, band, rng, CbiTrajectoryRecorder{&tr});
  return tr;
}

// ---------------------------------------------------------------------------------------
// Culling chain

/// Piecewise-constant frequency path. At Exp(n) epochs the CBI is restarted from
/// (r z, (1 - r) z) and run for 1/n; the new state is its frequency. When the inner run
/// hits tau the chain is absorbed at the frequency observed there.
inline Trajectory simulate_culling_chain(const ModelParams& params, double z, double r0, int n,
                                         const StopBand& band, const PathConfig& cfg, std::size_t path_index = 0) {
  check_frequency_inputs(z, r0);
  validate(band);
  validate(cfg);
  if (n < 1) throw std::invalid_argument("culling n must be >= 1");
  const CbiJumps jumps(params);
  Stream rng(cfg.seed, stream_tag::kCulling | path_index);
  Trajectory tr;
  struct ClampForward {
    Trajectory* out;
    void point(double, double, double) {}
    void event(double t, EventKind kind, double payload) {
      if (kind == EventKind::clamp) out->log(t, kind, payload);
    }
  };
  double r = r0;
  double t = 0.0;
  tr.push(0.0, r);
  const double inner = 1.0 / n;
  for (;;) {
    t += rng.exponential(static_cast<double>(n));
    if (t > cfg.horizon) break;
    const auto res = run_cbi(jumps, r * z, (1.0 - r) * z, inner, cfg.dt, band, rng, ClampForward{&tr}, t);
    const double total = res.x1 + res.x2;
    if (total > 0.0) r = std::clamp(res.x1 / total, 0.0, 1.0);
    tr.push(t, r);
    if (res.stopped) {
      tr.log(t, EventKind::stop_tau, total);
      break;
    }
    tr.log(t, EventKind::cull_restart, r);
  }
  tr.push(cfg.horizon, r);
  return tr;
}

inline std::vector<double> culling_terminal(const ModelParams& params, double z, double r0, int n,
                                            const StopBand& band, const PathConfig& cfg) {
  check_frequency_inputs(z, r0);
  validate(band);
  validate(cfg);
  std::vector<double> out(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](std::size_t i) {
    out[i] = simulate_culling_chain(params, z, r0, n, band, cfg, i).values.back();
  });
  return out;
}

struct CullingRow {
  int n = 0;
  Estimate f1;  // E[R_T]
  Estimate f2;  // E[R_T^2]
  double diff1 = 0.0;
  double diff1_se = 0.0;
  double diff2 = 0.0;
  double diff2_se = 0.0;
};

struct CullingConvergence {
  Estimate ref1;
  Estimate ref2;
  std::vector<CullingRow> rows;
};

/// Compares E[f(R_T)] of the culling chain for each n against the culled frequency SDE,
/// for f(r) = r and f(r) = r^2.
inline CullingConvergence culling_convergence(const ModelParams& params, double z, double r0,
                                              const std::vector<int>& n_list, const StopBand& band,
                                              const PathConfig& cfg) {
  CullingConvergence out;
  const auto ref = culled_frequency_terminal(params, z, r0, cfg);
  out.ref1 = moment_of_values(ref, 1);
  out.ref2 = moment_of_values(ref, 2);
  for (int n : n_list) {
    const auto vals = culling_terminal(params, z, r0, n, band, cfg);
    CullingRow row;
    row.n = n;
    row.f1 = moment_of_values(vals, 1);
    row.f2 = moment_of_values(vals, 2);
    row.diff1 = std::abs(row.f1.mean - out.ref1.mean);
    row.diff1_se = std::hypot(row.f1.se, out.ref1.se);
    row.diff2 = std::abs(row.f2.mean - out.ref2.mean);
    row.diff2_se = std::hypot(row.f2.se, out.ref2.se);
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace freqsim
