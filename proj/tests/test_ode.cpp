#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "freqsim/ode.hpp"

using namespace freqsim;
using freqsim::testing::pure_diffusion;
using freqsim::testing::reference_model;

namespace {

struct Triple {
  const char* label;
  double d1, d2, d3;
};

// One representative triple per row of the linear-case table.
const Triple kCases[] = {
    {"1a", -1, 0, 0}, {"1b", 1, 0, 0},   {"1c", -2, 0, 1}, {"1d", 2, 1, 0},   {"1e", 2, 0, 1},
    {"1f", -2, 1, 0}, {"1g", 0.5, 1, 2}, {"2a", -1, 0, 1}, {"2b", 1, 1, 0},   {"2c", 0, 1, 1},
};

void expect_same(const EquilibriumReport& closed, const EquilibriumReport& numeric, const std::string& what) {
  ASSERT_EQ(closed.degenerate, numeric.degenerate) << what;
  ASSERT_EQ(closed.equilibria.size(), numeric.equilibria.size()) << what;
  for (std::size_t i = 0; i < closed.equilibria.size(); ++i) {
    EXPECT_NEAR(closed.equilibria[i].location, numeric.equilibria[i].location, 1e-8) << what;
    EXPECT_EQ(closed.equilibria[i].stability, numeric.equilibria[i].stability) << what << " at " << i;
  }
}

LimitParams linear_lp(double a11, double a22, double a12, double a21, double j21, double j12) {
  LimitParams lp;
  lp.beta11 = {0.0, a11};
  lp.beta22 = {0.0, a22};
  lp.beta12 = {0.0, a12};
  lp.beta21 = {0.0, a21};
  lp.j21 = j21;
  lp.j12 = j12;
  return lp;
}

ModelParams linear_model() {
  ModelParams p = reference_model();
  p.mu1 = JumpMeasure({{1.0, 0.2, 0.3}});
  p.mu2 = JumpMeasure({{0.4, 0.5, 0.2}});
  return p;
}

ModelParams logistic_model(double c11, double c22, double a11, double a22) {
  ModelParams p;
  p.c1 = 0.4;
  p.c2 = 0.3;
  p.b11 = {0.0, a11, c11};
  p.b22 = {0.0, a22, c22};
  p.mu1 = JumpMeasure({{0.5, 0.0, 0.2}});
  p.mu2 = JumpMeasure({{0.0, 0.3, 0.4}});
  return p;
}

}  // namespace

TEST(LimitRhs, Examples) {
  LimitParams sym;
  sym.beta11 = sym.beta22 = {0.0, 0.7, -0.2};
  sym.beta12 = sym.beta21 = {0.0, 0.3};
  sym.j12 = sym.j21 = 0.4;
  EXPECT_NEAR(limit_rhs(sym, 0.5), 0.0, 1e-15);

  LimitParams push;
  push.j21 = 1.0;
  EXPECT_EQ(limit_rhs(push, 0.0), 1.0);

  const double a11 = 0.4, a22 = 0.1, a12 = 0.2, a21 = 0.05, j21 = 0.3, j12 = 0.15;
  const LimitParams lp = linear_lp(a11, a22, a12, a21, j21, j12);
  const double d1 = a11 - a22, d2 = a12 + j21, d3 = a21 + j12;
  for (int i = 0; i <= 10; ++i) {
    const double r = i / 10.0;
    EXPECT_NEAR(limit_rhs(lp, r), d1 * r * (1 - r) + d2 * (1 - r) * (1 - r) - d3 * r * r, 1e-15);
  }
}

TEST(LimitRhs, PolynomialFormAgrees) {
  LimitParams lp;
  lp.beta11 = {0.0, 0.7, -0.3, 0.05};
  lp.beta22 = {0.0, -0.2, 0.4};
  lp.beta12 = {0.0, 0.1, 0.2};
  lp.beta21 = {0.0, 0.05};
  lp.j21 = 0.3;
  lp.j12 = 0.6;
  const Polynomial p = rhs_polynomial(lp);
  for (int i = 0; i <= 20; ++i) EXPECT_NEAR(p(i / 20.0), limit_rhs(lp, i / 20.0), 1e-14);
}

TEST(LimitRhs, LinearFamilyCoefficientsMatchExactly) {
  const ModelParams p = linear_model();
  const auto d = linear_coefficients(p);
  const Polynomial got = rhs_polynomial(limit_params_from_model(p, Scaling::linear));
  const Polynomial want = linear_rhs_polynomial(d.d1, d.d2, d.d3);
  ASSERT_EQ(got.degree(), want.degree());
  for (int k = 0; k <= want.degree(); ++k) EXPECT_NEAR(got.coeff(k), want.coeff(k), 1e-15) << "k=" << k;
}

TEST(LimitRhs, InwardAtBoundariesForValidModels) {
  std::mt19937_64 g(21);
  std::uniform_real_distribution<double> u(0.0, 2.0), s(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    LimitParams lp;
    lp.beta11 = {0.0, s(g), s(g)};
    lp.beta22 = {0.0, s(g), s(g)};
    lp.beta12 = {0.0, u(g), u(g)};
    lp.beta21 = {0.0, u(g)};
    lp.j21 = u(g);
    lp.j12 = u(g);
    EXPECT_GE(limit_rhs(lp, 0.0), 0.0);
    EXPECT_LE(limit_rhs(lp, 1.0), 0.0);
  }
}

TEST(LimitParamsFromModel, Families) {
  ModelParams p;
  p.b11 = {0.0, 2.0};
  EXPECT_EQ(limit_params_from_model(p, Scaling::linear).beta11.coeffs(), (std::vector<double>{0.0, 2.0}));
  ModelParams q;
  q.b11 = {0.0, 0.5, -1.0};
  EXPECT_EQ(limit_params_from_model(q, Scaling::logistic).beta11.coeffs(), (std::vector<double>{0.0, 0.5, -1.0}));
  EXPECT_THROW(limit_params_from_model(q, Scaling::linear), ScalingMismatch);

  ModelParams cross = logistic_model(-1, -1, 0.5, 0);
  cross.mu1 = JumpMeasure({{0.5, 0.1, 0.2}});
  EXPECT_THROW(limit_params_from_model(cross, Scaling::logistic), ScalingMismatch);
  cross = logistic_model(-1, -1, 0.5, 0);
  cross.mu2 = JumpMeasure({{0.2, 0.3, 0.4}});
  EXPECT_THROW(limit_params_from_model(cross, Scaling::logistic), ScalingMismatch);
  cross = logistic_model(-1, -1, 0.5, 0);
  cross.b12 = {0.0, 0.1};
  EXPECT_THROW(limit_params_from_model(cross, Scaling::logistic), ScalingMismatch);

  ModelParams constant = linear_model();
  constant.b21 = {0.1, 0.05};
  EXPECT_THROW(limit_params_from_model(constant, Scaling::linear), ScalingMismatch);
}

TEST(ModelFamily, LogisticScalesQuadraticTerm) {
  const ModelFamily fam{logistic_model(-1.0, -0.5, 0.5, 0.2), Scaling::logistic};
  const ModelParams p = fam.at(4.0);
  EXPECT_EQ(p.b11.coeffs(), (std::vector<double>{0.0, 0.5, -0.25}));
  EXPECT_EQ(p.b22.coeffs(), (std::vector<double>{0.0, 0.2, -0.125}));
  // b(rz)/z is independent of z up to the quadratic correction.
  EXPECT_NEAR(eval_malthusian(p.b11, 0.5 * 4.0) / 4.0, fam.limit().beta11(0.5), 1e-15);
  const ModelFamily lin{linear_model(), Scaling::linear};
  EXPECT_EQ(lin.at(100.0).b11.coeffs(), linear_model().b11.coeffs());
}

TEST(Integrate, EquilibriumStartIsConstant) {
  const LimitParams lp = linear_lp(0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
  const Trajectory tr = integrate(lp, 0.5, 2.0, 0.01);
  for (double v : tr.values) EXPECT_EQ(v, 0.5);
}

TEST(Integrate, SymmetricLinearClosedForm) {
  const LimitParams lp = linear_lp(0.0, 0.0, 1.0, 1.0, 0.0, 0.0);  // RHS = 1 - 2r
  const double r0 = 0.1;
  const Trajectory tr = integrate(lp, r0, 2.0, 1e-3);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.times.size(); ++i)
    err = std::max(err, std::abs(tr.values[i] - (0.5 + (r0 - 0.5) * std::exp(-2.0 * tr.times[i]))));
  EXPECT_LE(err, 1e-8);
  EXPECT_TRUE(tr.events.empty());
}

TEST(Integrate, FourthOrder) {
  const LimitParams lp = linear_lp(0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
  auto error_at = [&](double dt) {
    const Trajectory tr = integrate(lp, 0.0, 1.0, dt);
    return std::abs(tr.values.back() - (0.5 - 0.5 * std::exp(-2.0)));
  };
  double prev = error_at(0.2);
  for (double dt : {0.1, 0.05, 0.025}) {
    const double e = error_at(dt);
    if (prev > 1e-12) {
      EXPECT_GE(prev / e, 8.0) << "dt=" << dt;
    }
    prev = e;
  }
}

TEST(Integrate, LogisticConvergesToInteriorRoot) {
  const LimitParams lp = limit_params_from_model(logistic_model(-1, -1, 0.5, 0), Scaling::logistic);
  const Trajectory tr = integrate(lp, 0.5, 80.0, 0.01);
  EXPECT_NEAR(tr.values.back(), 0.75, 1e-8);
}

TEST(Integrate, InputErrors) {
  EXPECT_THROW(integrate(LimitParams{}, -0.1, 1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(integrate(LimitParams{}, 0.5, 1.0, 0.0), std::invalid_argument);
}

TEST(FindEquilibria, Examples) {
  EquilibriumReport rep = find_equilibria(linear_lp(0.0, 0.0, 1.0, 1.0, 0.0, 0.0));
  ASSERT_EQ(rep.equilibria.size(), 1u);
  EXPECT_NEAR(rep.equilibria[0].location, 0.5, 1e-12);
  EXPECT_EQ(rep.equilibria[0].stability, Stability::stable);

  rep = find_equilibria(limit_params_from_model(logistic_model(-1, -1, 0.5, 0), Scaling::logistic));
  ASSERT_EQ(rep.equilibria.size(), 3u);
  EXPECT_EQ(rep.equilibria[0].location, 0.0);
  EXPECT_EQ(rep.equilibria[0].stability, Stability::unstable);
  EXPECT_NEAR(rep.equilibria[1].location, 0.75, 1e-12);
  EXPECT_EQ(rep.equilibria[1].stability, Stability::stable);
  EXPECT_EQ(rep.equilibria[2].location, 1.0);
  EXPECT_EQ(rep.equilibria[2].stability, Stability::unstable);

  rep = find_equilibria(LimitParams{});
  EXPECT_TRUE(rep.degenerate);
  EXPECT_TRUE(rep.equilibria.empty());
}

TEST(FindEquilibria, RootsVanishAndAreSorted) {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Polynomial p{u(g), u(g), u(g), u(g), u(g)};
    const auto rep = find_equilibria_poly(p);
    for (std::size_t i = 0; i < rep.equilibria.size(); ++i) {
      EXPECT_LE(std::abs(p(rep.equilibria[i].location)), 1e-10);
      if (i) {
        EXPECT_LT(rep.equilibria[i - 1].location, rep.equilibria[i].location);
      }
    }
  }
}

TEST(FindEquilibria, TangentialRootIsSemistable) {
  // (r - 0.3)^2 (r + 1): touches zero at 0.3 without a sign change.
  const Polynomial p = Polynomial{-0.3, 1.0} * Polynomial{-0.3, 1.0} * Polynomial{1.0, 1.0};
  const auto rep = find_equilibria_poly(p);
  ASSERT_EQ(rep.equilibria.size(), 1u);
  EXPECT_NEAR(rep.equilibria[0].location, 0.3, 1e-6);
  EXPECT_EQ(rep.equilibria[0].stability, Stability::semistable);
}

TEST(LinearClosedForm, CaseTableAgreesWithRootFinder) {
  for (const auto& c : kCases) {
    const auto closed = linear_case_closed_form(c.d1, c.d2, c.d3);
    ASSERT_TRUE(closed.case_label.has_value());
    EXPECT_EQ(*closed.case_label, c.label);
    expect_same(closed, find_equilibria_poly(linear_rhs_polynomial(c.d1, c.d2, c.d3)), c.label);
  }
}

TEST(LinearClosedForm, TableValues) {
  auto only = [](const EquilibriumReport& r) { return r.equilibria; };
  auto e = only(linear_case_closed_form(-1, 0, 0));
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].location, 0.0);
  EXPECT_EQ(e[0].stability, Stability::stable);
  EXPECT_EQ(e[1].location, 1.0);
  EXPECT_EQ(e[1].stability, Stability::unstable);

  e = only(linear_case_closed_form(0, 1, 1));
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].location, 0.5);
  EXPECT_EQ(e[0].stability, Stability::stable);

  e = only(linear_case_closed_form(2, 0, 1));
  EXPECT_NEAR(e.back().location, 2.0 / 3.0, 1e-15);
  e = only(linear_case_closed_form(-2, 1, 0));
  EXPECT_NEAR(e.front().location, 1.0 / 3.0, 1e-15);
  e = only(linear_case_closed_form(0.5, 1, 2));
  EXPECT_NEAR(e.front().location, (2.0 - 0.5 - std::sqrt(0.25 + 8.0)) / (2.0 * (1.0 - 0.5 - 2.0)), 1e-15);
  EXPECT_NEAR(e.front().location, 0.45743, 1e-5);

  // Case 2c with d1 != 0: d2 / (2 d2 - d1).
  e = only(linear_case_closed_form(1, 3, 2));
  ASSERT_EQ(e.size(), 1u);
  EXPECT_DOUBLE_EQ(e[0].location, 3.0 / 5.0);

  EXPECT_TRUE(linear_case_closed_form(0, 0, 0).degenerate);
}

TEST(LinearClosedForm, RandomSweepAgreesWithRootFinder) {
  std::mt19937_64 g(99);
  std::uniform_real_distribution<double> d1s(-3.0, 3.0), ds(0.0, 3.0);
  std::uniform_int_distribution<int> zero(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const double d1 = d1s(g);
    double d2 = ds(g), d3 = ds(g);
    const int z = zero(g);
    if (z == 1) d2 = 0.0;
    if (z == 2) d3 = 0.0;
    const auto closed = linear_case_closed_form(d1, d2, d3);
    expect_same(closed, find_equilibria_poly(linear_rhs_polynomial(d1, d2, d3)),
                "d=(" + std::to_string(d1) + "," + std::to_string(d2) + "," + std::to_string(d3) + ")");
  }
}

TEST(LinearClosedForm, OutsideTableFallsBack) {
  const auto rep = linear_case_closed_form(1.0, -0.5, 0.2);
  EXPECT_EQ(*rep.case_label, "outside-table");
  expect_same(rep, find_equilibria_poly(linear_rhs_polynomial(1.0, -0.5, 0.2)), "outside");
}

TEST(LogisticClosedForm, Examples) {
  auto rep = logistic_case_closed_form(-2.0, -1.5);
  EXPECT_EQ(*rep.case_label, "logistic-stable");
  ASSERT_EQ(rep.equilibria.size(), 3u);
  EXPECT_EQ(rep.equilibria[1].location, 0.75);
  EXPECT_EQ(rep.equilibria[1].stability, Stability::stable);

  rep = logistic_case_closed_form(2.0, 1.5);
  EXPECT_EQ(rep.equilibria[1].location, 0.75);
  EXPECT_EQ(rep.equilibria[1].stability, Stability::unstable);

  rep = logistic_case_closed_form(1.0, 2.0);
  EXPECT_EQ(*rep.case_label, "logistic-boundary");
  ASSERT_EQ(rep.equilibria.size(), 2u);
  EXPECT_EQ(rep.equilibria[0].location, 0.0);
  EXPECT_EQ(rep.equilibria[1].location, 1.0);
}

TEST(LogisticClosedForm, AgreesWithRootFinder) {
  const std::pair<double, double> fixed[] = {{-2, -1.5}, {2, 1.5}, {1, 2}, {-1, -2}, {1, -0.5}, {-1, 0.5}, {2, 0}, {0, 1}};
  for (const auto& [d1, d2] : fixed)
    expect_same(logistic_case_closed_form(d1, d2), find_equilibria_poly(logistic_rhs_polynomial(d1, d2)),
                std::to_string(d1) + "," + std::to_string(d2));
  std::mt19937_64 g(13);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double d1 = u(g), d2 = u(g);
    expect_same(logistic_case_closed_form(d1, d2), find_equilibria_poly(logistic_rhs_polynomial(d1, d2)),
                std::to_string(d1) + "," + std::to_string(d2));
  }
}

TEST(LogisticClosedForm, ModelCoefficients) {
  const auto [d1, d2] = logistic_coefficients(logistic_model(-1, -1, 0.5, 0));
  EXPECT_EQ(d1, -2.0);
  EXPECT_EQ(d2, -1.5);
  const ModelFamily fam{logistic_model(-1, -1, 0.5, 0), Scaling::logistic};
  expect_same(closed_form(fam), find_equilibria(fam.limit()), "family");
}

TEST(PhaseDiagram, Case1gSingleSignChange) {
  const LimitParams lp = linear_lp(0.5, 0.0, 1.0, 2.0, 0.0, 0.0);
  const auto d = phase_diagram(lp, 101);
  int changes = 0;
  for (std::size_t i = 1; i < d.samples.size(); ++i)
    changes += (d.samples[i - 1].second > 0.0) != (d.samples[i].second > 0.0);
  EXPECT_EQ(changes, 1);
  ASSERT_EQ(d.report.equilibria.size(), 1u);
  EXPECT_EQ(d.report.equilibria[0].stability, Stability::stable);
  EXPECT_EQ(phase_csv(d).substr(0, 6), "r,rhs\n");
}

TEST(PhaseDiagram, LogisticStableSignature) {
  const LimitParams lp = limit_params_from_model(logistic_model(-1, -1, 0.5, 0), Scaling::logistic);
  const auto d = phase_diagram(lp, 101);
  for (const auto& [r, v] : d.samples) {
    if (r > 0.0 && r < 0.75 - 1e-9) {
      EXPECT_GT(v, 0.0) << r;
    } else if (r > 0.75 + 1e-9 && r < 1.0) {
      EXPECT_LT(v, 0.0) << r;
    }
  }
}

TEST(PhaseDiagram, ZeroParams) {
  const auto d = phase_diagram(LimitParams{}, 11);
  for (const auto& s : d.samples) EXPECT_EQ(s.second, 0.0);
  EXPECT_TRUE(d.report.degenerate);
  EXPECT_THROW(phase_diagram(LimitParams{}, 1), std::invalid_argument);
}

TEST(LargePopulation, NullModelIsExact) {
  PathConfig cfg;
  cfg.dt = 0.01;
  cfg.n_paths = 20;
  const auto rows = large_population_experiment(ModelFamily{ModelParams{}, Scaling::linear}, 0.3, {10, 100}, cfg);
  for (const auto& row : rows) EXPECT_EQ(row.sup_sq.mean, 0.0);
}

TEST(LargePopulation, DiffusionFluctuationsShrinkWithZ) {
  PathConfig cfg;
  cfg.dt = 0.01;
  cfg.n_paths = 400;
  cfg.seed = 3;
  const auto rows =
      large_population_experiment(ModelFamily{pure_diffusion(0.5), Scaling::linear}, 0.5, {10, 1000}, cfg);
  EXPECT_GT(rows[0].sup_sq.mean - rows[1].sup_sq.mean, 2.0 * std::hypot(rows[0].sup_sq.se, rows[1].sup_sq.se));
}

TEST(LargePopulation, RejectsNonFamilyModel) {
  ModelParams p;
  p.b11 = {0.0, 1.0, 1.0};
  PathConfig cfg;
  cfg.dt = 0.1;
  EXPECT_THROW(large_population_experiment(ModelFamily{p, Scaling::linear}, 0.5, {10}, cfg), ScalingMismatch);
}

TEST(EquilibriumOutput, SummaryAndJson) {
  const auto rep = linear_case_closed_form(0, 1, 1);
  EXPECT_EQ(equilibrium_summary(rep), "case 2c\n0.5 stable\n");
  const auto j = equilibrium_json(rep);
  EXPECT_EQ(j["case"], "2c");
  EXPECT_EQ(j["equilibria"][0]["stability"], "stable");
}
