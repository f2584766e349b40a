// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.
// Usage: acceptance <path to the freqsim executable>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "freqsim/commands.hpp"

using namespace freqsim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const ModelParams kReference = freqsim::testing::reference_model();
constexpr double kReferenceZ = 1.0;
constexpr std::uint64_t kSeed = 20240611;

// 1. Generator identity residual for n <= 6 on 21 grid points, under one second.
Outcome generator_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = uniform_grid(21);
  const auto res = generator_identity_residual(kReference, kReferenceZ, 6, grid);
  const double secs = seconds_since(t0);
  if (auto* v = std::get_if<PositivityViolation>(&res)) return {false, "negative rates: " + v->describe()};
  const double r = std::get<double>(res);
  return {r <= 1e-9 && secs < 1.0,
          "max residual " + num(r) + " (<= 1e-09), " + num(secs) + " s (< 1 s)"};
}

// 2. Monte Carlo moment duality, one re-seed allowed.
Outcome moment_duality() {
  const auto t0 = std::chrono::steady_clock::now();
  PathConfig pc{5e-4, 0.5, kSeed, 50000};
  std::string detail;
  bool pass = false;
  for (int attempt = 0; attempt < 2 && !pass; ++attempt) {
    pc.seed = kSeed + static_cast<std::uint64_t>(attempt);
    const auto out = duality_check(kReference, kReferenceZ, 0.6, {1, 2, 3}, pc);
    if (auto* v = std::get_if<PositivityViolation>(&out)) return {false, "negative rates: " + v->describe()};
    pass = true;
    detail += attempt ? "; re-seed:" : "z-scores";
    for (const auto& r : std::get<std::vector<DualityReport>>(out)) {
      detail += " n0=" + std::to_string(r.n0) + " " + num(r.z_score) + " (" + num(r.lhs.mean) + " vs " +
                num(r.rhs.mean) + ")";
      pass = pass && r.z_score <= 3.0;
    }
  }
  const double secs = seconds_since(t0);
  detail += " (<= 3), " + num(secs) + " s (< 300 s)";
  return {pass && secs < 300.0, detail};
}

// 3. Culling chain distance to the SDE non-increasing in n within two combined SEs.
Outcome culling_convergence_check() {
  const PathConfig pc{1e-3, 0.5, kSeed, 10000};
  const auto conv = culling_convergence(kReference, kReferenceZ, 0.6, {4, 16, 64}, StopBand{}, pc);
  bool pass = true;
  std::string detail = "|diff| r:";
  for (const auto& row : conv.rows) detail += " n=" + std::to_string(row.n) + " " + num(row.diff1);
  detail += "; r^2:";
  for (const auto& row : conv.rows) detail += " n=" + std::to_string(row.n) + " " + num(row.diff2);
  for (std::size_t i = 1; i < conv.rows.size(); ++i) {
    const auto& a = conv.rows[i - 1];
    const auto& b = conv.rows[i];
    pass = pass && b.diff1 <= a.diff1 + 2.0 * std::hypot(a.diff1_se, b.diff1_se);
    pass = pass && b.diff2 <= a.diff2 + 2.0 * std::hypot(a.diff2_se, b.diff2_se);
  }
  return {pass, detail};
}

// 4. Squared sup distance to the limit ODE decreasing in z.
Outcome large_population() {
  const ModelFamily fam{kReference, Scaling::linear};
  const PathConfig pc{1e-3, 1.0, kSeed, 1000};
  const auto rows = large_population_experiment(fam, 0.6, {10.0, 100.0, 1000.0}, pc);
  bool pass = true;
  std::string detail = "E sup|R - r|^2:";
  for (const auto& r : rows) detail += " z=" + num(r.z) + " " + num(r.sup_sq.mean) + "+-" + num(r.sup_sq.se);
  for (std::size_t i = 1; i < rows.size(); ++i)
    pass = pass && rows[i - 1].sup_sq.mean - rows[i].sup_sq.mean > 2.0 * std::hypot(rows[i - 1].sup_sq.se, rows[i].sup_sq.se);
  const double ratio = rows.back().sup_sq.mean / rows.front().sup_sq.mean;
  pass = pass && ratio <= 0.25;
  return {pass, detail + "; ratio z=1000/z=10 " + num(ratio) + " (<= 0.25)"};
}

bool same_report(const EquilibriumReport& a, const EquilibriumReport& b) {
  if (a.equilibria.size() != b.equilibria.size()) return false;
  for (std::size_t i = 0; i < a.equilibria.size(); ++i) {
    if (std::abs(a.equilibria[i].location - b.equilibria[i].location) > 1e-8) return false;
    if (a.equilibria[i].stability != b.equilibria[i].stability) return false;
  }
  return true;
}

// 5. Linear case table: closed form against the numeric root finder.
Outcome case_table() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    const char* label;
    double d1, d2, d3;
  };
  const Case cases[] = {{"1a", -1, 0, 0},  {"1b", 1, 0, 0},   {"1c", -2, 0, 1},   {"1d", 2, 1, 0},
                        {"1e", 2, 0, 1},   {"1f", -2, 1, 0},  {"1g", 0.5, 1, 2},  {"2a", -1, 0, 1},
                        {"2b", 1, 1, 0},   {"2c", 0, 1, 1}};
  bool pass = true;
  std::string failed;
  for (const auto& c : cases) {
    const auto closed = linear_case_closed_form(c.d1, c.d2, c.d3);
    const auto numeric = find_equilibria_poly(linear_rhs_polynomial(c.d1, c.d2, c.d3));
    const bool ok = closed.case_label == std::string(c.label) && same_report(closed, numeric);
    if (!ok) failed += std::string(" ") + c.label;
    pass = pass && ok;
  }
  const auto sym = linear_case_closed_form(0.0, 1.0, 1.0);
  const bool sym_ok = sym.equilibria.size() == 1 && sym.equilibria[0].location == 0.5 &&
                      sym.equilibria[0].stability == Stability::stable;
  const double secs = seconds_since(t0);
  return {pass && sym_ok && secs < 1.0,
          std::string("10 cases ") + (failed.empty() ? "agree" : "disagree:" + failed) + ", symmetric case " +
              (sym.equilibria.empty() ? "none" : num(sym.equilibria[0].location) + " " +
                                                     to_string(sym.equilibria[0].stability)) +
              ", " + num(secs) + " s (< 1 s)"};
}

std::vector<Equilibrium> interior(const EquilibriumReport& rep) {
  std::vector<Equilibrium> out;
  for (const auto& e : rep.equilibria)
    if (e.location > 1e-9 && e.location < 1.0 - 1e-9) out.push_back(e);
  return out;
}

// 6. Logistic case via the numeric root finder.
Outcome logistic_case() {
  bool pass = true;
  std::string detail;
  auto expect_interior = [&](double d1, double d2, Stability want) {
    const auto in = interior(find_equilibria_poly(logistic_rhs_polynomial(d1, d2)));
    const bool ok = in.size() == 1 && std::abs(in[0].location - 0.75) <= 1e-10 && in[0].stability == want;
    detail += "(" + num(d1) + "," + num(d2) + ") -> " +
              (in.size() == 1 ? num(in[0].location) + " " + to_string(in[0].stability) : "count " + std::to_string(in.size())) +
              "; ";
    pass = pass && ok;
  };
  expect_interior(-2.0, -1.5, Stability::stable);
  expect_interior(2.0, 1.5, Stability::unstable);
  int none = 0, total = 0;
  for (double d1 : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0})
    for (double d2 : {-3.0, -2.0, -1.0, 1.0, 2.0, 3.0}) {
      if (std::abs(d1) > std::abs(d2)) continue;
      ++total;
      if (interior(find_equilibria_poly(logistic_rhs_polynomial(d1, d2))).empty()) ++none;
    }
  pass = pass && none == total;
  detail += "|d1| <= |d2|: " + std::to_string(none) + "/" + std::to_string(total) + " without interior equilibrium";
  return {pass, detail};
}

// 7. Range invariant: no jump exits, small clamp overshoot that shrinks with dt.
Outcome range_invariant() {
  FrequencyStats coarse, fine;
  culled_frequency_terminal(kReference, kReferenceZ, 0.6, PathConfig{1e-3, 1.0, kSeed, 1000}, &coarse);
  culled_frequency_terminal(kReference, kReferenceZ, 0.6, PathConfig{2.5e-4, 1.0, kSeed, 1000}, &fine);
  const bool shrink = coarse.max_overshoot == 0.0 ? fine.max_overshoot == 0.0
                                                   : fine.max_overshoot * 2.0 <= coarse.max_overshoot;
  const bool pass = coarse.jump_exits == 0 && fine.jump_exits == 0 && coarse.max_overshoot <= 1e-2 && shrink;
  return {pass, "jump exits " + std::to_string(coarse.jump_exits) + "/" + std::to_string(fine.jump_exits) + " over " +
                    std::to_string(coarse.jumps + fine.jumps) + " jumps, max overshoot " + num(coarse.max_overshoot) +
                    " (<= 0.01, " + std::to_string(coarse.clamps) + " clamps) -> " + num(fine.max_overshoot) +
                    " at dt/4 (" + std::to_string(fine.clamps) + " clamps)"};
}

// 8. Lipschitz constant in the initial condition stable across separations.
Outcome lipschitz() {
  const PathConfig pc{1e-3, 0.5, kSeed, 10000};
  std::vector<double> k;
  std::string detail = "K:";
  for (double sep : {0.2, 0.1, 0.05}) {
    const auto d = coupled_separation(kReference, kReferenceZ, 0.5 - sep / 2, 0.5 + sep / 2, pc);
    k.push_back(mean_and_se(d).mean / sep);
    detail += " |r-s|=" + num(sep) + " " + num(k.back());
  }
  const double lo = *std::min_element(k.begin(), k.end());
  const double hi = *std::max_element(k.begin(), k.end());
  const bool pass = lo > 0.0 && hi <= 2.0 * lo;
  return {pass, detail + "; max/min " + num(lo > 0 ? hi / lo : INFINITY) + " (<= 2)"};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[e.path().filename().string()] = ss.str();
  }
  return files;
}

// 9. Repeated CLI runs with the same config and seed give byte-identical outputs.
Outcome determinism(const std::string& exe) {
  if (exe.empty()) return {false, "no freqsim executable given"};
  const fs::path dir = fs::temp_directory_path() / "freqsim_acceptance_determinism";
  const std::string configs = FREQSIM_CONFIG_DIR;
  struct Run {
    const char* command;
    const char* config;
  };
  const Run runs[] = {{"simulate", "reference.json"},      {"simulate", "culling.json"},
                      {"duality", "pure_diffusion.json"},  {"dual-rates", "reference.json"},
                      {"ode", "linear_case_1g.json"},      {"converge-z", "linear_reference.json"}};
  std::size_t files = 0;
  for (const auto& run : runs) {
    fs::remove_all(dir);
    const std::string base = "\"" + exe + "\" " + run.command + " --config \"" + configs + "/" + run.config +
                             "\" --out \"" + dir.string() + "\" --seed 987654321";
    std::map<std::string, std::string> first;
    for (int rep = 0; rep < 2; ++rep) {
      const std::string cmd = base + (rep ? " --threads 3" : " --threads 1") + " > /dev/null";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) return {false, std::string(run.command) + " " + run.config + " exited with status " + std::to_string(rc)};
      auto snap = snapshot(dir);
      if (rep == 0) {
        first = std::move(snap);
        fs::remove_all(dir);
      } else if (snap != first) {
        return {false, std::string(run.command) + " " + run.config + " outputs differ between runs"};
      }
    }
    files += first.size();
  }
  fs::remove_all(dir);
  return {true, std::to_string(std::size(runs)) + " commands run twice, " + std::to_string(files) +
                    " output files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string exe = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"generator-dual identity", generator_identity},
      {"moment duality", moment_duality},
      {"culling convergence", culling_convergence_check},
      {"large-population limit", large_population},
      {"equilibrium case table", case_table},
      {"logistic equilibria", logistic_case},
      {"range invariant", range_invariant},
      {"lipschitz in initial condition", lipschitz},
      {"determinism", [&] { return determinism(exe); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
