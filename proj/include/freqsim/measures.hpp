#pragma once

// Finite atomic jump measures on U2 = R_+^2 \ {0} and the integral functionals the
// frequency generator and the dual rates are built from. Every functional is an exact
// atom sum, so floating-point rounding (about 1e-12 relative per atom term at the
// exponents used here) is the only error source.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqsim/polynomial.hpp"
#include "freqsim/random.hpp"

namespace freqsim {

struct Atom {
  double w1 = 0.0;
  double w2 = 0.0;
  double mass = 0.0;
};

/// Returns a description of the first violated atom invariant, if any.
inline std::optional<std::string> check_atom(const Atom& a) {
  if (!std::isfinite(a.w1) || !std::isfinite(a.w2) || !std::isfinite(a.mass))
    return "atom fields must be finite";
  if (a.w1 < 0.0 || a.w2 < 0.0) return "atom location must be nonnegative";
  if (a.w1 + a.w2 <= 0.0) return "atom location must differ from the origin";
  if (a.mass <= 0.0) return "atom mass must be positive";
  return std::nullopt;
}

class JumpMeasure {
 public:
  JumpMeasure() = default;

  explicit JumpMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (auto err = check_atom(atoms_[i]))
        throw std::invalid_argument("atom " + std::to_string(i) + ": " + *err);
    }
  }

  std::span<const Atom> atoms() const { return atoms_; }
  bool empty() const { return atoms_.empty(); }

  double total_mass() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.mass;
    return m;
  }

  /// True if some atom has a positive i-th coordinate (i in {1, 2}).
  bool charges(int i) const {
    return std::any_of(atoms_.begin(), atoms_.end(),
                       [i](const Atom& a) { return (i == 1 ? a.w1 : a.w2) > 0.0; });
  }

  /// Sum of measures (atom lists concatenated).
  friend JumpMeasure operator+(const JumpMeasure& a, const JumpMeasure& b) {
    JumpMeasure out = a;
    out.atoms_.insert(out.atoms_.end(), b.atoms_.begin(), b.atoms_.end());
    return out;
  }

 private:
  std::vector<Atom> atoms_;
};

/// Image of an atom under w -> w / (z + w1 + w2). `rest` is 1 - u1 - u2 computed as
/// z / (z + w1 + w2), which avoids cancellation for large jumps.
struct PushedAtom {
  double u1 = 0.0;
  double u2 = 0.0;
  double mass = 0.0;
  double rest = 1.0;
};

inline PushedAtom push_atom(const Atom& a, double z) {
  const double denom = z + a.w1 + a.w2;
  return PushedAtom{a.w1 / denom, a.w2 / denom, a.mass, z / denom};
}

inline std::vector<PushedAtom> pushforward(const JumpMeasure& measure, double z) {
  if (!(z > 0.0)) throw std::invalid_argument("pushforward: z must be positive");
  std::vector<PushedAtom> out;
  out.reserve(measure.atoms().size());
  for (const auto& a : measure.atoms()) out.push_back(push_atom(a, z));
  return out;
}

inline double mean_component(const JumpMeasure& measure, int i) {
  if (i != 1 && i != 2) throw std::invalid_argument("mean_component: index must be 1 or 2");
  double s = 0.0;
  for (const auto& a : measure.atoms()) s += a.mass * (i == 1 ? a.w1 : a.w2);
  return s;
}

/// Integral of u1^k (1 - u1 - u2)^(n-k) against the pushed measure.
inline double lambda_nk(const JumpMeasure& measure, double z, int n, int k) {
  if (n < 1 || k < 1 || k > n) throw std::invalid_argument("lambda_nk: need 1 <= k <= n");
  double s = 0.0;
  for (const auto& p : pushforward(measure, z)) s += p.mass * ipow(p.u1, k) * ipow(p.rest, n - k);
  return s;
}

/// Integral of 1 - (1 - u1 - u2)^n - n u_which / (1 - u1 - u2) against the pushed measure.
inline double gamma_n(const JumpMeasure& measure, double z, int n, int which) {
  if (n < 1) throw std::invalid_argument("gamma_n: n must be >= 1");
  if (which != 1 && which != 2) throw std::invalid_argument("gamma_n: which must be 1 or 2");
  double s = 0.0;
  for (const auto& p : pushforward(measure, z)) {
    const double u = which == 1 ? p.u1 : p.u2;
    s += p.mass * (1.0 - ipow(p.rest, n) - n * u / p.rest);
  }
  return s;
}

/// Integral of 1 - (1 - u2)^n against the pushed measure.
inline double vartheta_n(const JumpMeasure& measure, double z, int n) {
  if (n < 1) throw std::invalid_argument("vartheta_n: n must be >= 1");
  double s = 0.0;
  for (const auto& p : pushforward(measure, z)) s += p.mass * (1.0 - ipow(1.0 - p.u2, n));
  return s;
}

/// Bracket of S_c: -int w1(w1+w2)/(z+w1+w2) mu1 + int w2(w1+w2)/(z+w1+w2) mu2.
inline double sc_coefficient(const JumpMeasure& mu1, const JumpMeasure& mu2, double z) {
  if (!(z > 0.0)) throw std::invalid_argument("sc_coefficient: z must be positive");
  double s = 0.0;
  for (const auto& a : mu1.atoms()) s -= a.mass * a.w1 * (a.w1 + a.w2) / (z + a.w1 + a.w2);
  for (const auto& a : mu2.atoms()) s += a.mass * a.w2 * (a.w1 + a.w2) / (z + a.w1 + a.w2);
  return s;
}

/// which == 1: int z w2/(z+w1+w2) dmu; which == 2: int z w1/(z+w1+w2) dmu.
inline double mc_coefficient(const JumpMeasure& measure, double z, int which) {
  if (!(z > 0.0)) throw std::invalid_argument("mc_coefficient: z must be positive");
  if (which != 1 && which != 2) throw std::invalid_argument("mc_coefficient: which must be 1 or 2");
  double s = 0.0;
  for (const auto& a : measure.atoms())
    s += a.mass * z * (which == 1 ? a.w2 : a.w1) / (z + a.w1 + a.w2);
  return s;
}

/// Draws indices proportionally to nonnegative weights via a cumulative table.
class WeightedIndex {
 public:
  WeightedIndex() = default;
  explicit WeightedIndex(std::span<const double> weights) {
    cumulative_.reserve(weights.size());
    double acc = 0.0;
    for (double w : weights) {
      acc += w;
      cumulative_.push_back(acc);
    }
  }

  double total() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

  std::size_t draw(Stream& rng) const {
    const double target = rng.uniform() * total();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    if (it == cumulative_.end()) --it;
    return static_cast<std::size_t>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
};

inline const Atom& sample_atom(const JumpMeasure& measure, Stream& rng) {
  if (measure.empty()) throw std::invalid_argument("sample_atom: zero measure");
  std::vector<double> w;
  w.reserve(measure.atoms().size());
  for (const auto& a : measure.atoms()) w.push_back(a.mass);
  return measure.atoms()[WeightedIndex(w).draw(rng)];
}

}  // namespace freqsim
