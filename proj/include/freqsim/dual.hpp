#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "freqsim/io.hpp"
#include "freqsim/measures.hpp"
#include "freqsim/model.hpp"
#include "freqsim/parallel.hpp"
#include "freqsim/random.hpp"
#include "freqsim/simulate.hpp"

namespace freqsim {

/// A state of the block-counting chain: a block count n >= 0, or the cemetery.
struct DualState {
  static constexpr int kDagger = -1;
  int value = 0;

  bool is_dagger() const { return value == kDagger; }
  static DualState dagger() { return {kDagger}; }
  friend bool operator==(DualState, DualState) = default;
};

inline int m_tilde(const ModelParams& p) {
  return std::max({p.b11.degree(), p.b12.degree(), p.b21.degree(), p.b22.degree()});
}

/// Number of upward targets per row. The quadratic-variation and gamma terms sit at
/// m = n + 1 even when every b_ij is constant, so the range never drops below one.
inline int up_range(const ModelParams& p) { return std::max(1, m_tilde(p)); }

inline double theta_k(const ModelParams& p, double z, int k) {
  if (k < 1) throw std::invalid_argument("theta_k: k must be >= 1");
  const int m11 = p.b11.degree(), m12 = p.b12.degree(), m21 = p.b21.degree(), m22 = p.b22.degree();
  const double sign = (k % 2 == 1) ? 1.0 : -1.0;  // (-1)^(k+1)
  auto zp = [z](int e) { return e >= 0 ? ipow(z, e) : 1.0 / ipow(z, -e); };
  double t = 0.0;
  if (k < m11) t += p.b11.coeff(k + 1) * zp(k);
  if (k <= m11) t -= p.b11.coeff(k) * zp(k - 1);
  if (k <= m21) t -= p.b21.coeff(k) * zp(k - 1);
  if (k <= m22) {
    double s = 0.0;
    for (int l = k; l <= m22; ++l) s += binomial(l, k) * p.b22.coeff(l) * zp(l - 1);
    t += sign * s;
  }
  if (k < m12) {
    double s = 0.0;
    for (int l = k + 1; l <= m12; ++l) s += binomial(l + 1, k + 1) * p.b12.coeff(l) * zp(l - 1);
    t += sign * s;
  }
  if (k <= m12) t += sign * p.b12.coeff(k) * zp(k - 1);
  return t;
}

/// Off-diagonal rates out of one state n >= 1.
struct RateRow {
  std::vector<double> down;  // down[m] = q_{n,m}, 0 <= m < n
  std::vector<double> up;    // up[j - 1] = q_{n,n+j}, 1 <= j <= up_range
  double kill = 0.0;         // q_{n,dagger}

  double total() const {
    double s = kill;
    for (double v : down) s += v;
    for (double v : up) s += v;
    return s;
  }
};

/// Row n of the rate table, unclamped and unchecked.
inline RateRow rate_row(const ModelParams& p, double z, int n) {
  if (n < 1) throw std::invalid_argument("rate_row: n must be >= 1");
  RateRow row;
  row.down.assign(static_cast<std::size_t>(n), 0.0);
  for (int m = 0; m < n; ++m) {
    double v = 0.0;
    if (m == n - 1)
      v += binomial(n, 2) * (2.0 / z) * p.c1 + n * (p.b11.coeff(0) + p.b12(z) + p.eta1) / z;
    if (m > 0) {
      const int k = n - m + 1;
      v += binomial(n, k) * z * (lambda_nk(p.mu1, z, n, k) - lambda_nk(p.mu2, z, n, k));
    }
    const int k = n - m;
    v += binomial(n, k) * (z * lambda_nk(p.mu2, z, n, k) + lambda_nk(p.nu, z, n, k));
    row.down[static_cast<std::size_t>(m)] = v;
  }
  const int range = up_range(p);
  row.up.assign(static_cast<std::size_t>(range), 0.0);
  for (int j = 1; j <= range; ++j) {
    double v = n * theta_k(p, z, j);
    if (j == 1)
      v += binomial(n + 1, 2) * (2.0 / z) * (p.c1 - p.c2) - z * (gamma_n(p.mu1, z, n, 1) - gamma_n(p.mu2, z, n, 2));
    row.up[static_cast<std::size_t>(j - 1)] = v;
  }
  row.kill = z * vartheta_n(p.mu1, z, n) + vartheta_n(p.nu, z, n) + n * (p.b22.coeff(0) + p.b21(z) + p.eta2) / z;
  return row;
}

struct RateOffender {
  int n = 0;
  int m = 0;  // DualState::kDagger for the cemetery
  double rate = 0.0;
};

struct PositivityViolation {
  std::vector<RateOffender> offenders;

  std::string describe() const {
    std::string s = "negative dual rates:";
    for (const auto& o : offenders) {
      s += " q(" + std::to_string(o.n) + "," + (o.m == DualState::kDagger ? std::string("dagger") : std::to_string(o.m)) +
           ")=" + format_double(o.rate);
    }
    return s;
  }
};

/// Negative values within this relative distance of zero are rounding noise and set to 0.
inline constexpr double kRateRoundoff = 1e-12;

/// Clamps rounding-level negatives in place and appends genuine negatives to `bad`.
inline void screen_row(int n, RateRow& row, std::vector<RateOffender>& bad) {
  double scale = std::abs(row.kill);
  for (double v : row.down) scale = std::max(scale, std::abs(v));
  for (double v : row.up) scale = std::max(scale, std::abs(v));
  const double tol = kRateRoundoff * std::max(1.0, scale);
  auto screen = [&](double& v, int m) {
    if (v >= 0.0) return;
    if (v >= -tol) {
      v = 0.0;
      return;
    }
    bad.push_back({n, m, v});
  };
  for (std::size_t m = 0; m < row.down.size(); ++m) screen(row.down[m], static_cast<int>(m));
  for (std::size_t j = 0; j < row.up.size(); ++j) screen(row.up[j], n + static_cast<int>(j) + 1);
  screen(row.kill, DualState::kDagger);
}

struct DualRates {
  double z = 1.0;
  int n_max = 0;
  int m_tilde = 0;
  int up_range = 1;
  std::vector<RateRow> rows;  // rows[n - 1]

  const RateRow& row(int n) const { return rows.at(static_cast<std::size_t>(n - 1)); }

  /// q_{n,m} for n in [1, n_max] and m != n; m = DualState::kDagger gives the killing rate.
  double rate(int n, int m) const {
    if (n < 1 || n > n_max) throw std::out_of_range("DualRates::rate: n outside table");
    const RateRow& r = row(n);
    if (m == DualState::kDagger) return r.kill;
    if (m >= 0 && m < n) return r.down[static_cast<std::size_t>(m)];
    if (m > n && m <= n + up_range) return r.up[static_cast<std::size_t>(m - n - 1)];
    return 0.0;
  }
};

using RatesOrViolation = std::variant<DualRates, PositivityViolation>;

inline RatesOrViolation build_rates(const ModelParams& p, double z, int n_max) {
  if (!(z > 0.0)) throw std::invalid_argument("build_rates: z must be positive");
  if (n_max < 1) throw std::invalid_argument("build_rates: n_max must be >= 1");
  DualRates out;
  out.z = z;
  out.n_max = n_max;
  out.m_tilde = m_tilde(p);
  out.up_range = up_range(p);
  std::vector<RateOffender> bad;
  for (int n = 1; n <= n_max; ++n) {
    RateRow row = rate_row(p, z, n);
    screen_row(n, row, bad);
    out.rows.push_back(std::move(row));
  }
  if (!bad.empty()) return PositivityViolation{std::move(bad)};
  return out;
}

class DualCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DualPositivityError : public std::runtime_error {
 public:
  explicit DualPositivityError(PositivityViolation v) : std::runtime_error(v.describe()), violation(std::move(v)) {}
  PositivityViolation violation;
};

/// Rate table that grows on demand up to a hard cap. Readers hold an immutable snapshot;
/// an extension builds the new rows off to the side and publishes the whole table at once.
class DualChain {
 public:
  DualChain(ModelParams params, DualRates initial, int cap)
      : state_(std::make_shared<Shared>()) {
    state_->params = std::move(params);
    state_->extendable = true;
    state_->cap = std::max(cap, initial.n_max);
    state_->table = std::make_shared<const DualRates>(std::move(initial));
  }

  /// A fixed table that cannot grow past its n_max.
  explicit DualChain(DualRates fixed) : state_(std::make_shared<Shared>()) {
    state_->cap = fixed.n_max;
    state_->table = std::make_shared<const DualRates>(std::move(fixed));
  }

  static std::variant<DualChain, PositivityViolation> create(const ModelParams& p, double z, int n_max,
                                                             int cap = 0) {
    auto built = build_rates(p, z, n_max);
    if (auto* v = std::get_if<PositivityViolation>(&built)) return *v;
    return DualChain(p, std::get<DualRates>(std::move(built)), cap > 0 ? cap : 10 * n_max);
  }

  int cap() const { return state_->cap; }

  std::shared_ptr<const DualRates> snapshot() const {
    std::lock_guard lock(state_->mutex);
    return state_->table;
  }

  /// A snapshot whose table covers state n; throws past the cap or on a negative rate.
  std::shared_ptr<const DualRates> covering(int n) const {
    std::lock_guard lock(state_->mutex);
    if (n <= state_->table->n_max) return state_->table;
    if (!state_->extendable || n > state_->cap)
      throw DualCapExceeded("dual chain reached state " + std::to_string(n) + " beyond table cap " +
                            std::to_string(state_->cap));
    const DualRates& old = *state_->table;
    DualRates grown = old;
    const int target = std::min(state_->cap, std::max(n, 2 * old.n_max));
    std::vector<RateOffender> bad;
    for (int k = old.n_max + 1; k <= target; ++k) {
      RateRow row = rate_row(state_->params, old.z, k);
      screen_row(k, row, bad);
      grown.rows.push_back(std::move(row));
    }
    if (!bad.empty()) throw DualPositivityError(PositivityViolation{std::move(bad)});
    grown.n_max = target;
    state_->table = std::make_shared<const DualRates>(std::move(grown));
    return state_->table;
  }

 private:
  struct Shared {
    std::mutex mutex;
    ModelParams params;
    bool extendable = false;
    int cap = 0;
    std::shared_ptr<const DualRates> table;
  };
  std::shared_ptr<Shared> state_;
};

/// Gillespie simulation of the chain up to `horizon`; 0 and dagger are absorbing.
inline DualState simulate_dual(const DualChain& chain, int n0, double horizon, Stream& rng) {
  if (n0 < 0) throw std::invalid_argument("simulate_dual: n0 must be >= 0");
  auto table = chain.covering(std::max(n0, 1));
  int n = n0;
  double t = 0.0;
  while (n > 0) {
    if (n > table->n_max) table = chain.covering(n);
    const RateRow& row = table->row(n);
    const double total = row.total();
    if (!(total > 0.0)) return {n};
    t += rng.exponential(total);
    if (t > horizon) return {n};
    double u = rng.uniform() * total;
    int next = DualState::kDagger;
    bool chosen = false;
    for (std::size_t m = 0; m < row.down.size() && !chosen; ++m) {
      if (u < row.down[m]) {
        next = static_cast<int>(m);
        chosen = true;
      } else {
        u -= row.down[m];
      }
    }
    for (std::size_t j = 0; j < row.up.size() && !chosen; ++j) {
      if (u < row.up[j]) {
        next = n + static_cast<int>(j) + 1;
        chosen = true;
      } else {
        u -= row.up[j];
      }
    }
    if (!chosen && row.kill <= 0.0) {
      // u landed past the last bucket through rounding; take the last positive rate.
      for (std::size_t j = row.up.size(); j-- > 0 && !chosen;) {
        if (row.up[j] > 0.0) {
          next = n + static_cast<int>(j) + 1;
          chosen = true;
        }
      }
      for (std::size_t m = row.down.size(); m-- > 0 && !chosen;) {
        if (row.down[m] > 0.0) {
          next = static_cast<int>(m);
          chosen = true;
        }
      }
    }
    if (next == DualState::kDagger) return DualState::dagger();
    n = next;
  }
  return {n};
}

/// H(r, n) = r^n with H(r, dagger) = 0.
inline double dual_h(double r, DualState s) { return s.is_dagger() ? 0.0 : ipow(r, s.value); }

/// Monte Carlo estimate of E_n0[H(r, N_t)]; path i uses stream (seed, dual tag | i).
inline Estimate dual_moment(const DualChain& chain, int n0, double r, double t, std::size_t n_paths,
                            std::uint64_t seed) {
  if (n_paths == 0) throw std::invalid_argument("dual_moment: n_paths must be positive");
  std::vector<double> xs(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    Stream rng(seed, stream_tag::kDual | i);
    xs[i] = dual_h(r, simulate_dual(chain, n0, t, rng));
  });
  return mean_and_se(xs);
}

using ResidualOrViolation = std::variant<double, PositivityViolation>;

/// max |L^(z) r^n - sum_m q_nm (r^m - r^n) + q_{n,dagger} r^n| over n <= n_max and the grid.
inline ResidualOrViolation generator_identity_residual(const ModelParams& p, double z, int n_max,
                                                       std::span<const double> r_grid) {
  auto built = build_rates(p, z, n_max);
  if (auto* v = std::get_if<PositivityViolation>(&built)) return *v;
  const DualRates& rates = std::get<DualRates>(built);
  const FrequencyDynamics dyn(p, z);
  double worst = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    const RateRow& row = rates.row(n);
    for (double r : r_grid) {
      const double rn = ipow(r, n);
      double q = -row.kill * rn;
      for (int m = 0; m < n; ++m) q += row.down[static_cast<std::size_t>(m)] * (ipow(r, m) - rn);
      for (std::size_t j = 0; j < row.up.size(); ++j) q += row.up[j] * (ipow(r, n + static_cast<int>(j) + 1) - rn);
      worst = std::max(worst, std::abs(dyn.generator_on_monomial(n, r) - q));
    }
  }
  return worst;
}

inline std::vector<double> uniform_grid(int points) {
  if (points < 2) throw std::invalid_argument("uniform_grid: need at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) / (points - 1);
  return g;
}

struct DualityReport {
  int n0 = 0;
  Estimate lhs;
  Estimate rhs;
  double z_score = 0.0;
};

inline double two_sample_z(const Estimate& a, const Estimate& b) {
  const double diff = std::abs(a.mean - b.mean);
  if (diff == 0.0) return 0.0;
  const double se = std::hypot(a.se, b.se);
  return se > 0.0 ? diff / se : INFINITY;
}

/// Compares E_r[R_t^n0] (culled frequency paths, shared across n0) with E_n0[H(r, N_t)].
/// cfg.horizon is t and cfg.n_paths the sample size on each side.
inline std::variant<std::vector<DualityReport>, PositivityViolation> duality_check(
    const ModelParams& p, double z, double r, const std::vector<int>& n0_list, const PathConfig& cfg, int n_max = 0) {
  int top = 1;
  for (int n0 : n0_list) top = std::max(top, n0);
  auto chain = DualChain::create(p, z, std::max(n_max, 2 * top + 8));
  if (auto* v = std::get_if<PositivityViolation>(&chain)) return *v;
  const DualChain& dual = std::get<DualChain>(chain);
  const auto values = culled_frequency_terminal(p, z, r, cfg);
  std::vector<DualityReport> out;
  for (int n0 : n0_list) {
    DualityReport rep;
    rep.n0 = n0;
    rep.lhs = moment_of_values(values, n0);
    rep.rhs = dual_moment(dual, n0, r, cfg.horizon, cfg.n_paths, cfg.seed);
    rep.z_score = two_sample_z(rep.lhs, rep.rhs);
    out.push_back(rep);
  }
  return out;
}

/// CSV with columns n, m, rate; the cemetery is written as "dagger". Zero rates are kept.
inline std::string rates_csv(const DualRates& rates) {
  std::string out = "n,m,rate\n";
  for (int n = 1; n <= rates.n_max; ++n) {
    const RateRow& row = rates.row(n);
    const std::string ns = std::to_string(n) + ",";
    for (int m = 0; m < n; ++m) out += ns + std::to_string(m) + "," + format_double(row.down[static_cast<std::size_t>(m)]) + "\n";
    for (std::size_t j = 0; j < row.up.size(); ++j)
      out += ns + std::to_string(n + static_cast<int>(j) + 1) + "," + format_double(row.up[j]) + "\n";
    out += ns + "dagger," + format_double(row.kill) + "\n";
  }
  return out;
}

}  // namespace freqsim
