#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqsim/measures.hpp"
#include "freqsim/polynomial.hpp"

namespace freqsim {

/// Polynomial Malthusian b(x) = sum_k a^(k) x^k for x > 0, and b(x) = 0 for x <= 0.
class PolynomialMalthusian {
 public:
  PolynomialMalthusian() = default;
  PolynomialMalthusian(std::initializer_list<double> coeffs) : poly_(coeffs) {}
  explicit PolynomialMalthusian(std::vector<double> coeffs) : poly_(std::move(coeffs)) {}
  explicit PolynomialMalthusian(Polynomial p) : poly_(std::move(p)) {}

  double operator()(double x) const { return x > 0.0 ? poly_(x) : 0.0; }

  const Polynomial& polynomial() const { return poly_; }
  const std::vector<double>& coeffs() const { return poly_.coeffs(); }
  double coeff(std::size_t k) const { return poly_.coeff(k); }
  int degree() const { return poly_.degree(); }
  bool coefficientwise_nonnegative() const {
    return std::all_of(coeffs().begin(), coeffs().end(), [](double c) { return c >= 0.0; });
  }

 private:
  Polynomial poly_;
};

inline double eval_malthusian(const PolynomialMalthusian& b, double x) { return b(x); }

struct ModelParams {
  double c1 = 0.0;
  double c2 = 0.0;
  double eta1 = 0.0;
  double eta2 = 0.0;
  PolynomialMalthusian b11, b12, b21, b22;
  JumpMeasure mu1, mu2, nu;
};

/// Values of the seven coefficient functions of the culled frequency SDE at one point.
struct TermBundle {
  double d_tilde = 0.0;
  double s = 0.0;
  double s_c = 0.0;
  double m = 0.0;
  double m_c1 = 0.0;
  double m_c2 = 0.0;
  double sigma = 0.0;

  /// Full SDE drift D~ + S + S_c + m + m_c1 + m_c2.
  double drift() const { return d_tilde + s + s_c + m + m_c1 + m_c2; }
};

struct Violation {
  std::string field;
  std::string message;
};

/// Standing-assumption checks; an empty result means the parameters are valid.
inline std::vector<Violation> validate_params(const ModelParams& p) {
  std::vector<Violation> out;
  auto nonneg = [&](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) out.push_back({name, "must be finite and nonnegative"});
  };
  nonneg(p.c1, "c1");
  nonneg(p.c2, "c2");
  nonneg(p.eta1, "eta1");
  nonneg(p.eta2, "eta2");
  if (!p.b12.coefficientwise_nonnegative())
    out.push_back({"b12", "off-diagonal Malthusian must be nonnegative"});
  if (!p.b21.coefficientwise_nonnegative())
    out.push_back({"b21", "off-diagonal Malthusian must be nonnegative"});
  auto finite_coeffs = [&](const PolynomialMalthusian& b, const char* name) {
    for (double c : b.coeffs())
      if (!std::isfinite(c)) out.push_back({name, "coefficients must be finite"});
  };
  finite_coeffs(p.b11, "b11");
  finite_coeffs(p.b12, "b12");
  finite_coeffs(p.b21, "b21");
  finite_coeffs(p.b22, "b22");
  auto atoms_ok = [&](const JumpMeasure& m, const char* name) {
    for (const auto& a : m.atoms())
      if (auto err = check_atom(a)) out.push_back({name, *err});
  };
  atoms_ok(p.mu1, "mu1");
  atoms_ok(p.mu2, "mu2");
  atoms_ok(p.nu, "nu");
  return out;
}

/// The culled frequency process at a fixed total population z: coefficient functions,
/// generator on monomials and the drift used by the raw-event simulation scheme.
/// Measure integrals are precomputed once per z.
class FrequencyDynamics {
 public:
  FrequencyDynamics(const ModelParams& params, double z)
      : p_(params),
        z_(z),
        sc_(sc_coefficient(params.mu1, params.mu2, z)),
        mc1_(mc_coefficient(params.mu1, z, 1)),
        mc2_(mc_coefficient(params.mu2, z, 2)),
        mean_w1_mu1_(mean_component(params.mu1, 1)),
        mean_w2_mu2_(mean_component(params.mu2, 2)),
        pushed_mu1_(pushforward(params.mu1, z)),
        pushed_mu2_(pushforward(params.mu2, z)),
        pushed_nu_(pushforward(params.nu, z)) {}

  const ModelParams& params() const { return p_; }
  double z() const { return z_; }
  const std::vector<PushedAtom>& pushed_mu1() const { return pushed_mu1_; }
  const std::vector<PushedAtom>& pushed_mu2() const { return pushed_mu2_; }
  const std::vector<PushedAtom>& pushed_nu() const { return pushed_nu_; }

  double d_tilde(double r) const {
    if (r < 0.0 || r > 1.0) return 0.0;
    const double q = 1.0 - r;
    return (p_.b11(z_ * r) * q - p_.b22(z_ * q) * r + p_.b12(z_ * q) * q - p_.b21(z_ * r) * r) / z_;
  }

  double selection(double r) const {
    if (r < 0.0 || r > 1.0) return 0.0;
    return 2.0 / z_ * (p_.c2 - p_.c1) * r * (1.0 - r);
  }

  double mutation(double r) const { return (p_.eta1 * (1.0 - r) - p_.eta2 * r) / z_; }

  double sigma_squared(double r) const {
    if (r < 0.0 || r > 1.0) return 0.0;
    const double v = 2.0 / z_ * r * (1.0 - r) * (p_.c1 * (1.0 - r) + p_.c2 * r);
    return std::max(v, 0.0);
  }

  double sigma(double r) const { return std::sqrt(sigma_squared(r)); }

  TermBundle terms(double r) const {
    TermBundle t;
    const bool inside = r >= 0.0 && r <= 1.0;
    t.d_tilde = d_tilde(r);
    t.s = selection(r);
    t.s_c = inside ? sc_ * r * (1.0 - r) : 0.0;
    t.m = mutation(r);
    t.m_c1 = inside ? -r * r * mc1_ : 0.0;
    t.m_c2 = inside ? (1.0 - r) * (1.0 - r) * mc2_ : 0.0;
    t.sigma = sigma(r);
    return t;
  }

  /// Drift paired with raw (uncompensated) mu1/mu2 events thinned at r z and (1 - r) z:
  /// the SDE drift minus the means of the raw jump parts, in closed form.
  double raw_event_drift(double r) const {
    if (r < 0.0 || r > 1.0) return mutation(r);
    return d_tilde(r) + selection(r) + mutation(r) - r * (1.0 - r) * (mean_w1_mu1_ - mean_w2_mu2_);
  }

  /// Same quantity as raw_event_drift, computed as SDE drift minus the pushed-atom
  /// compensators of the raw mu1/mu2 parts.
  double raw_event_drift_by_compensators(double r) const {
    double comp = 0.0;
    for (const auto& a : pushed_mu1_) comp += r * z_ * a.mass * ((1.0 - r) * a.u1 - r * a.u2);
    for (const auto& a : pushed_mu2_) comp += (1.0 - r) * z_ * a.mass * ((1.0 - r) * a.u1 - r * a.u2);
    return terms(r).drift() - comp;
  }

  /// L^(z) applied to f(r) = r^n, jump integrals taken against the pushed measures.
  double generator_on_monomial(int n, double r) const {
    if (n < 1) throw std::invalid_argument("generator_on_monomial: n must be >= 1");
    const double rn = ipow(r, n);
    const double df = n * ipow(r, n - 1);
    const double d2f = n >= 2 ? n * (n - 1) * ipow(r, n - 2) : 0.0;
    double value = (d_tilde(r) + selection(r) + mutation(r)) * df + 0.5 * sigma_squared(r) * d2f;
    for (const auto& a : pushed_mu1_) {
      const double jumped = ipow(a.u1 + r * a.rest, n);
      value += r * z_ * a.mass * (jumped - rn - (1.0 - r) * a.u1 / a.rest * df);
    }
    for (const auto& a : pushed_mu2_) {
      const double jumped = ipow(a.u1 + r * a.rest, n);
      value += (1.0 - r) * z_ * a.mass * (jumped - rn + r * a.u2 / a.rest * df);
    }
    for (const auto& a : pushed_nu_) value += a.mass * (ipow(a.u1 + r * a.rest, n) - rn);
    return value;
  }

 private:
  ModelParams p_;
  double z_;
  double sc_;
  double mc1_;
  double mc2_;
  double mean_w1_mu1_;
  double mean_w2_mu2_;
  std::vector<PushedAtom> pushed_mu1_;
  std::vector<PushedAtom> pushed_mu2_;
  std::vector<PushedAtom> pushed_nu_;
};

inline TermBundle term_bundle(const ModelParams& params, double z, double r) {
  if (!(z > 0.0)) throw std::invalid_argument("term_bundle: z must be positive");
  return FrequencyDynamics(params, z).terms(r);
}

inline double generator_on_monomial(const ModelParams& params, double z, int n, double r) {
  if (!(z > 0.0)) throw std::invalid_argument("generator_on_monomial: z must be positive");
  return FrequencyDynamics(params, z).generator_on_monomial(n, r);
}

}  // namespace freqsim
