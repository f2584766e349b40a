#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "freqsim/io.hpp"
#include "freqsim/measures.hpp"
#include "freqsim/model.hpp"
#include "freqsim/parallel.hpp"
#include "freqsim/polynomial.hpp"
#include "freqsim/random.hpp"
#include "freqsim/simulate.hpp"
#include "freqsim/trajectory.hpp"

namespace freqsim {

struct LimitParams {
  PolynomialMalthusian beta11, beta12, beta21, beta22;
  double j21 = 0.0;  // int w1 mu2(dw)
  double j12 = 0.0;  // int w2 mu1(dw)
};

inline double limit_rhs(const LimitParams& lp, double r) {
  const double q = 1.0 - r;
  return lp.beta11(r) * q - lp.beta22(q) * r + lp.beta12(q) * q - lp.beta21(r) * r + q * q * lp.j21 -
         r * r * lp.j12;
}

/// The right-hand side as a polynomial in r. Agrees with limit_rhs on [0, 1] whenever
/// the beta polynomials have no constant term.
inline Polynomial rhs_polynomial(const LimitParams& lp) {
  const Polynomial r{0.0, 1.0};
  const Polynomial q{1.0, -1.0};
  return lp.beta11.polynomial() * q - lp.beta22.polynomial().reflected() * r + lp.beta12.polynomial().reflected() * q -
         lp.beta21.polynomial() * r + lp.j21 * (q * q) - lp.j12 * (r * r);
}

enum class Stability { stable, unstable, semistable };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    case Stability::semistable: return "semistable";
  }
  return "unknown";
}

struct Equilibrium {
  double location = 0.0;
  Stability stability = Stability::stable;
};

struct EquilibriumReport {
  std::vector<Equilibrium> equilibria;
  std::optional<std::string> case_label;
  bool degenerate = false;
};

inline std::string equilibrium_summary(const EquilibriumReport& rep) {
  std::string s;
  if (rep.case_label) s += "case " + *rep.case_label + "\n";
  if (rep.degenerate) return s + "degenerate: right-hand side vanishes identically\n";
  for (const auto& e : rep.equilibria) s += format_double(e.location) + " " + to_string(e.stability) + "\n";
  if (rep.equilibria.empty()) s += "no equilibria in [0, 1]\n";
  return s;
}

inline nlohmann::ordered_json equilibrium_json(const EquilibriumReport& rep) {
  nlohmann::ordered_json j;
  j["case"] = rep.case_label ? nlohmann::ordered_json(*rep.case_label) : nlohmann::ordered_json(nullptr);
  j["degenerate"] = rep.degenerate;
  auto eq = nlohmann::ordered_json::array();
  for (const auto& e : rep.equilibria) eq.push_back({{"location", e.location}, {"stability", to_string(e.stability)}});
  j["equilibria"] = std::move(eq);
  return j;
}

inline constexpr double kSemistableSlope = 1e-9;
/// Relative to the largest coefficient.
inline constexpr double kEndpointZero = 1e-12;

namespace detail {

inline double bisect(const Polynomial& p, double lo, double hi) {
  double flo = p(lo);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = p(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Roots of p in [0, 1]: zeros at the breakpoints plus bisection on every sign change.
/// Breakpoints are the uniform grid and the critical points of p (found recursively), so
/// each bracket is monotone and two roots never share one. The endpoints have no outside
/// neighbour to show a sign change, so values within `end_tol` of zero count as roots there.
inline std::vector<double> bracketed_roots(const Polynomial& p, int intervals, double end_tol) {
  if (p.degree() < 1) return {};
  std::vector<double> pts;
  for (int i = 0; i <= intervals; ++i) pts.push_back(static_cast<double>(i) / intervals);
  for (double c : bracketed_roots(p.derivative(), intervals, 0.0)) pts.push_back(c);
  std::sort(pts.begin(), pts.end());
  std::vector<double> roots;
  double x0 = pts.front();
  double f0 = p(x0);
  if (std::abs(f0) <= end_tol) f0 = 0.0;
  if (f0 == 0.0) roots.push_back(x0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double x1 = pts[i];
    if (x1 == x0) continue;
    double f1 = p(x1);
    if (i + 1 == pts.size() && std::abs(f1) <= end_tol) f1 = 0.0;
    if (f1 == 0.0) {
      roots.push_back(x1);
    } else if (f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
      roots.push_back(bisect(p, x0, x1));
    }
    x0 = x1;
    f0 = f1;
  }
  return roots;
}

inline double sign_probe(const Polynomial& p, double x) {
  const double v = p(x);
  return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

inline Stability classify(const Polynomial& p, const Polynomial& dp, double x) {
  constexpr double kProbe = 1e-5;
  const double slope = dp(x);
  if (x <= 0.0) {
    if (std::abs(slope) > kSemistableSlope) return slope < 0.0 ? Stability::stable : Stability::unstable;
    const double s = sign_probe(p, kProbe);
    return s < 0.0 ? Stability::stable : (s > 0.0 ? Stability::unstable : Stability::semistable);
  }
  if (x >= 1.0) {
    if (std::abs(slope) > kSemistableSlope) return slope < 0.0 ? Stability::stable : Stability::unstable;
    const double s = sign_probe(p, 1.0 - kProbe);
    return s > 0.0 ? Stability::stable : (s < 0.0 ? Stability::unstable : Stability::semistable);
  }
  if (std::abs(slope) > kSemistableSlope) return slope < 0.0 ? Stability::stable : Stability::unstable;
  const double left = sign_probe(p, std::max(0.0, x - kProbe));
  const double right = sign_probe(p, std::min(1.0, x + kProbe));
  if (left > 0.0 && right < 0.0) return Stability::stable;
  if (left < 0.0 && right > 0.0) return Stability::unstable;
  return Stability::semistable;
}

}  // namespace detail

/// Equilibria of a polynomial right-hand side on [0, 1]. Tangential zeros are picked
/// up as critical points of p at which p itself vanishes to 1e-10.
inline EquilibriumReport find_equilibria_poly(const Polynomial& p, int intervals = 1024) {
  EquilibriumReport rep;
  double scale = 0.0;
  for (double c : p.coeffs()) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) {
    rep.degenerate = true;
    return rep;
  }
  const Polynomial dp = p.derivative();
  std::vector<double> roots = detail::bracketed_roots(p, intervals, kEndpointZero * scale);
  if (!dp.is_zero()) {
    for (double c : detail::bracketed_roots(dp, intervals, 0.0))
      if (std::abs(p(c)) <= 1e-10) roots.push_back(c);
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> unique;
  for (double x : roots) {
    if (unique.empty() || x - unique.back() > 1e-9) unique.push_back(x);
  }
  for (double x : unique) rep.equilibria.push_back({x, detail::classify(p, dp, x)});
  return rep;
}

inline EquilibriumReport find_equilibria(const LimitParams& lp) { return find_equilibria_poly(rhs_polynomial(lp)); }

/// Right-hand side of the linear case, d1 r(1-r) + d2 (1-r)^2 - d3 r^2.
inline Polynomial linear_rhs_polynomial(double d1, double d2, double d3) {
  return Polynomial{d2, d1 - 2.0 * d2, d2 - d1 - d3};
}

/// Closed-form equilibria of the linear case. The stable interior root is
/// (2 d2 - d1 - sqrt(d1^2 + 4 d2 d3)) / (2 (d2 - d1 - d3)); the variant with
/// d1^2 - 4 d2 d3 under the root does not vanish the right-hand side and is not used.
/// Triples with d2 < 0 or d3 < 0 fall outside the table and get the generic quadratic
/// treatment, labelled "outside-table".
inline EquilibriumReport linear_case_closed_form(double d1, double d2, double d3) {
  EquilibriumReport rep;
  const double a = d2 - d1 - d3;
  auto stable = [](double x) { return Equilibrium{x, Stability::stable}; };
  auto unstable = [](double x) { return Equilibrium{x, Stability::unstable}; };
  auto interior = [&] { return (2.0 * d2 - d1 - std::sqrt(d1 * d1 + 4.0 * d2 * d3)) / (2.0 * a); };

  if (d1 == 0.0 && d2 == 0.0 && d3 == 0.0) {
    rep.degenerate = true;
    rep.case_label = "degenerate";
    return rep;
  }
  if (d2 >= 0.0 && d3 >= 0.0) {
    if (a != 0.0) {
      if (d2 == 0.0 && d3 == 0.0) {
        rep.case_label = d1 < 0.0 ? "1a" : "1b";
        rep.equilibria = d1 < 0.0 ? std::vector{stable(0.0), unstable(1.0)} : std::vector{unstable(0.0), stable(1.0)};
        return rep;
      }
      if (d2 == 0.0) {
        if (d1 <= 0.0) {
          rep.case_label = "1c";
          rep.equilibria = {stable(0.0)};
        } else {
          rep.case_label = "1e";
          rep.equilibria = {unstable(0.0), stable(interior())};
        }
        return rep;
      }
      if (d3 == 0.0) {
        if (d1 >= 0.0) {
          rep.case_label = "1d";
          rep.equilibria = {stable(1.0)};
        } else {
          rep.case_label = "1f";
          rep.equilibria = {stable(interior()), unstable(1.0)};
        }
        return rep;
      }
      rep.case_label = "1g";
      rep.equilibria = {stable(interior())};
      return rep;
    }
    const double x = d2 / (2.0 * d2 - d1);
    if (d2 == 0.0) {
      rep.case_label = "2a";
      rep.equilibria = {stable(0.0)};
    } else if (d1 == d2 && d3 == 0.0) {
      rep.case_label = "2b";
      rep.equilibria = {stable(1.0)};
    } else {
      rep.case_label = "2c";
      rep.equilibria = {stable(x)};
    }
    return rep;
  }

  rep = find_equilibria_poly(linear_rhs_polynomial(d1, d2, d3));
  rep.case_label = "outside-table";
  return rep;
}

/// Closed-form equilibria of the logistic case, r(1-r)(d1 r - d2). The interior point
/// d2/d1 is reported only when d1 d2 > 0 and |d1| > |d2|.
inline EquilibriumReport logistic_case_closed_form(double d1, double d2) {
  EquilibriumReport rep;
  if (d1 == 0.0 && d2 == 0.0) {
    rep.degenerate = true;
    rep.case_label = "degenerate";
    return rep;
  }
  // RHS'(0) = -d2; when it vanishes the sign just inside 0 is that of d1.
  Stability at0;
  if (d2 != 0.0)
    at0 = -d2 < 0.0 ? Stability::stable : Stability::unstable;
  else
    at0 = d1 < 0.0 ? Stability::stable : Stability::unstable;
  // RHS'(1) = d2 - d1; when it vanishes the sign just inside 1 is that of -d1.
  Stability at1;
  if (d2 != d1)
    at1 = d2 - d1 < 0.0 ? Stability::stable : Stability::unstable;
  else
    at1 = d1 < 0.0 ? Stability::stable : Stability::unstable;
  rep.equilibria.push_back({0.0, at0});
  if (d1 * d2 > 0.0 && std::abs(d1) > std::abs(d2)) {
    rep.case_label = d2 < 0.0 ? "logistic-stable" : "logistic-unstable";
    rep.equilibria.push_back({d2 / d1, d2 < 0.0 ? Stability::stable : Stability::unstable});
  } else {
    rep.case_label = "logistic-boundary";
  }
  rep.equilibria.push_back({1.0, at1});
  return rep;
}

inline Polynomial logistic_rhs_polynomial(double d1, double d2) {
  return Polynomial{0.0, 1.0} * Polynomial{1.0, -1.0} * Polynomial{-d2, d1};
}

struct PhaseDiagram {
  std::vector<std::pair<double, double>> samples;
  EquilibriumReport report;
};

inline PhaseDiagram phase_diagram(const LimitParams& lp, int grid_size) {
  if (grid_size < 2) throw std::invalid_argument("phase_diagram: grid_size must be >= 2");
  PhaseDiagram out;
  for (int i = 0; i < grid_size; ++i) {
    const double r = static_cast<double>(i) / (grid_size - 1);
    out.samples.emplace_back(r, limit_rhs(lp, r));
  }
  out.report = find_equilibria(lp);
  return out;
}

inline std::string phase_csv(const PhaseDiagram& d) {
  std::string s = "r,rhs\n";
  for (const auto& [r, v] : d.samples) s += format_double(r) + "," + format_double(v) + "\n";
  return s;
}

/// Classical RK4 on the dt grid; values leaving [0, 1] are clamped and logged.
inline Trajectory integrate(const LimitParams& lp, double r0, double horizon, double dt) {
  if (!(r0 >= 0.0 && r0 <= 1.0)) throw std::invalid_argument("integrate: r0 must lie in [0, 1]");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("integrate: dt and horizon must be positive");
  const Polynomial f = rhs_polynomial(lp);
  Trajectory tr;
  double r = r0;
  tr.push(0.0, r);
  double t = 0.0;
  const std::size_t steps = grid_steps(horizon, dt);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_next = grid_time(k, dt, horizon);
    const double h = t_next - t;
    const double k1 = f(r);
    const double k2 = f(r + 0.5 * h * k1);
    const double k3 = f(r + 0.5 * h * k2);
    const double k4 = f(r + h * k3);
    r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (r < 0.0 || r > 1.0) {
      const double over = r < 0.0 ? -r : r - 1.0;
      r = std::clamp(r, 0.0, 1.0);
      tr.log(t_next, EventKind::clamp, over);
    }
    t = t_next;
    tr.push(t, r);
  }
  return tr;
}

// ---------------------------------------------------------------------------------------
// Scaling families

class ScalingMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scaling { linear, logistic };

inline const char* to_string(Scaling s) { return s == Scaling::linear ? "linear" : "logistic"; }

/// Linear: b_ij(x) = a_ij x for every z. Logistic: b_ii(x) = c_ii x^2 / z + a_ii x and
/// b_ij = 0; the base model stores the coefficients [0, a_ii, c_ii] (its value at z = 1).
inline void check_family(const ModelParams& p, Scaling s) {
  const PolynomialMalthusian* all[4] = {&p.b11, &p.b12, &p.b21, &p.b22};
  const char* names[4] = {"b11", "b12", "b21", "b22"};
  for (int i = 0; i < 4; ++i) {
    if (all[i]->coeff(0) != 0.0)
      throw ScalingMismatch(std::string(names[i]) + ": constant term must be zero for a scaling family");
  }
  if (s == Scaling::linear) {
    for (int i = 0; i < 4; ++i)
      if (all[i]->degree() > 1) throw ScalingMismatch(std::string(names[i]) + ": linear family needs degree <= 1");
    return;
  }
  if (p.b11.degree() > 2 || p.b22.degree() > 2)
    throw ScalingMismatch("logistic family needs diagonal Malthusians of degree <= 2");
  if (!p.b12.polynomial().is_zero() || !p.b21.polynomial().is_zero())
    throw ScalingMismatch("logistic family needs b12 = b21 = 0");
  if (p.mu1.charges(2)) throw ScalingMismatch("logistic family needs mu1({w2 > 0}) = 0");
  if (p.mu2.charges(1)) throw ScalingMismatch("logistic family needs mu2({w1 > 0}) = 0");
}

inline LimitParams limit_params_from_model(const ModelParams& p, Scaling s) {
  check_family(p, s);
  LimitParams lp;
  lp.beta11 = p.b11;
  lp.beta22 = p.b22;
  lp.beta12 = p.b12;
  lp.beta21 = p.b21;
  lp.j21 = mean_component(p.mu2, 1);
  lp.j12 = mean_component(p.mu1, 2);
  return lp;
}

struct ModelFamily {
  ModelParams base;
  Scaling scaling = Scaling::linear;

  ModelParams at(double z) const {
    if (!(z > 0.0)) throw std::invalid_argument("ModelFamily::at: z must be positive");
    check_family(base, scaling);
    ModelParams p = base;
    if (scaling == Scaling::logistic) {
      p.b11 = PolynomialMalthusian{0.0, base.b11.coeff(1), base.b11.coeff(2) / z};
      p.b22 = PolynomialMalthusian{0.0, base.b22.coeff(1), base.b22.coeff(2) / z};
    }
    return p;
  }

  LimitParams limit() const { return limit_params_from_model(base, scaling); }
};

/// d1, d2, d3 of the linear case from a linear-family model.
struct LinearCoefficients {
  double d1, d2, d3;
};

inline LinearCoefficients linear_coefficients(const ModelParams& p) {
  check_family(p, Scaling::linear);
  return {p.b11.coeff(1) - p.b22.coeff(1), p.b12.coeff(1) + mean_component(p.mu2, 1),
          p.b21.coeff(1) + mean_component(p.mu1, 2)};
}

/// d1 = c11 + c22 and d2 = c22 - a11 + a22 of the logistic case.
inline std::pair<double, double> logistic_coefficients(const ModelParams& p) {
  check_family(p, Scaling::logistic);
  return {p.b11.coeff(2) + p.b22.coeff(2), p.b22.coeff(2) - p.b11.coeff(1) + p.b22.coeff(1)};
}

inline EquilibriumReport closed_form(const ModelFamily& fam) {
  if (fam.scaling == Scaling::linear) {
    const auto d = linear_coefficients(fam.base);
    return linear_case_closed_form(d.d1, d.d2, d.d3);
  }
  const auto [d1, d2] = logistic_coefficients(fam.base);
  return logistic_case_closed_form(d1, d2);
}

struct LargePopulationRow {
  double z = 0.0;
  Estimate sup_sq;  // E[sup_t |R^(z) - R^(inf)|^2]
};

/// For each z, the mean over cfg.n_paths culled-frequency paths of the squared sup
/// distance to the RK4 limit path, taken over the dt grid up to cfg.horizon.
inline std::vector<LargePopulationRow> large_population_experiment(const ModelFamily& fam, double r0,
                                                                   const std::vector<double>& z_list,
                                                                   const PathConfig& cfg) {
  validate(cfg);
  const LimitParams lp = fam.limit();
  const Trajectory limit = integrate(lp, r0, cfg.horizon, cfg.dt);
  std::vector<LargePopulationRow> rows;
  for (std::size_t zi = 0; zi < z_list.size(); ++zi) {
    const double z = z_list[zi];
    const ModelParams p = fam.at(z);
    const FrequencyDynamics dyn(p, z);
    const FrequencyJumps jumps(dyn);
    std::vector<double> sups(cfg.n_paths);
    parallel_for(cfg.n_paths, [&](std::size_t i) {
      Stream rng(cfg.seed, stream_tag::kLargePopulation | (static_cast<std::uint64_t>(zi) << 32) | i);
      struct SupRecorder {
        const std::vector<double>* ref;
        double sup = 0.0;
        void point(double, std::size_t k, std::span<const double> r) {
          if (k == kNotOnGrid) return;
          const double d = r[0] - (*ref)[k];
          sup = std::max(sup, d * d);
        }
        void event(std::size_t, double, EventKind, double) {}
      } rec{&limit.values};
      double r[1] = {r0};
      run_frequency(dyn, jumps, r, cfg.horizon, cfg.dt, rng, rec);
      sups[i] = rec.sup;
    });
    rows.push_back({z, mean_and_se(sups)});
  }
  return rows;
}

}  // namespace freqsim
