#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "freqsim/config.hpp"
#include "freqsim/dual.hpp"
#include "freqsim/io.hpp"
#include "freqsim/ode.hpp"
#include "freqsim/parallel.hpp"
#include "freqsim/simulate.hpp"
#include "freqsim/trajectory.hpp"

namespace freqsim {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int check_failed = 1;
inline constexpr int config = 2;
inline constexpr int positivity = 3;
inline constexpr int scaling = 4;
inline constexpr int numeric = 5;
}  // namespace exit_code

struct RunReport {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
  json results = json::object();
  json effective_config;
  int exit_code = exit_code::ok;
  json error;  // set when the command stops on a typed failure

  /// Report body for report.json. Wall-clock time is left out so that the file depends
  /// only on (config, seed).
  json to_json() const {
    json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["exit_code"] = exit_code;
    j["outputs"] = outputs;
    j["warnings"] = warnings;
    j["results"] = results;
    if (!error.is_null()) j["error"] = error;
    j["effective_config"] = effective_config;
    return j;
  }
};

/// A small column table rendered as CSV or as a JSON array of row objects.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  std::string csv() const {
    std::string s;
    for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + csv_field(columns[i]);
    s += "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) s += ",";
        const json& v = row[i];
        if (v.is_number_float()) s += format_double(v.get<double>());
        else if (v.is_number_unsigned()) s += std::to_string(v.get<std::uint64_t>());
        else if (v.is_number_integer()) s += std::to_string(v.get<long long>());
        else if (v.is_string()) s += csv_field(v.get<std::string>());
        else if (v.is_boolean()) s += v.get<bool>() ? "true" : "false";
        else s += csv_field(v.dump());
      }
      s += "\n";
    }
    return s;
  }

  json to_json() const {
    json a = json::array();
    for (const auto& row : rows) {
      json o;
      for (std::size_t i = 0; i < columns.size() && i < row.size(); ++i) o[columns[i]] = row[i];
      a.push_back(std::move(o));
    }
    return a;
  }
};

class OutputSink {
 public:
  OutputSink(const RunConfig& cfg, RunReport& report) : dir_(cfg.output.dir), json_(cfg.output.format == "json"), report_(&report) {
    std::filesystem::create_directories(dir_);
  }

  bool json_format() const { return json_; }

  void write(const std::string& name, const std::string& content) {
    const auto path = (dir_ / name).string();
    write_text_file(path, content);
    report_->outputs.push_back(path);
  }

  /// Writes stem.csv or stem.json according to the configured format.
  void table(const std::string& stem, const Table& t) {
    if (json_) write(stem + ".json", t.to_json().dump(2) + "\n");
    else write(stem + ".csv", t.csv());
  }

  std::string report_path() const { return (dir_ / "report.json").string(); }

 private:
  std::filesystem::path dir_;
  bool json_;
  RunReport* report_;
};

inline RunReport start_report(const std::string& command, const RunConfig& cfg) {
  RunReport r;
  r.command = command;
  r.effective_config = to_json(cfg);
  r.config_hash = fnv1a_hex(r.effective_config.dump());
  r.seed = cfg.path.seed;
  return r;
}

inline json estimate_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}}; }

inline void positivity_failure(RunReport& report, const PositivityViolation& v) {
  json offenders = json::array();
  for (const auto& o : v.offenders)
    offenders.push_back({{"n", o.n}, {"m", o.m == DualState::kDagger ? json("dagger") : json(o.m)}, {"rate", o.rate}});
  report.error = {{"error", "positivity"}, {"message", v.describe()}, {"offenders", offenders}};
  report.exit_code = exit_code::positivity;
}

// ---------------------------------------------------------------------------------------

inline RunReport cmd_simulate(const RunConfig& cfg) {
  RunReport report = start_report("simulate", cfg);
  OutputSink out(cfg, report);
  const std::size_t n = cfg.path.n_paths;
  const std::size_t files = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.output.max_trajectory_files));

  std::vector<Trajectory> kept(files);
  std::vector<std::vector<Event>> events(n);
  std::vector<double> terminal(n), terminal2(n);
  std::vector<FrequencyStats> stats(n);
  std::vector<char> stopped(n, 0);

  parallel_for(n, [&](std::size_t i) {
    Trajectory tr;
    switch (cfg.target) {
      case Target::culled:
        tr = simulate_culled_frequency(cfg.model, cfg.z, cfg.r0, cfg.path, i, &stats[i]);
        break;
      case Target::cbi: {
        const auto x0 = cfg.x0.value_or(std::pair{cfg.r0 * cfg.z, (1.0 - cfg.r0) * cfg.z});
        tr = simulate_cbi(cfg.model, x0, cfg.band, cfg.path, i);
        break;
      }
      case Target::culling:
        tr = simulate_culling_chain(cfg.model, cfg.z, cfg.r0, cfg.culling.n, cfg.band, cfg.path, i);
        break;
    }
    terminal[i] = tr.values.back();
    terminal2[i] = tr.is_pair() ? tr.values2.back() : 0.0;
    stopped[i] = tr.count(EventKind::stop_tau) > 0;
    if (cfg.target != Target::culled) {
      stats[i].clamps = tr.count(EventKind::clamp);
      stats[i].max_overshoot = tr.max_payload(EventKind::clamp);
    }
    events[i] = tr.events;
    if (i < files) kept[i] = std::move(tr);
  });

  for (std::size_t i = 0; i < files; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "trajectory_%05zu", i);
    if (out.json_format()) out.write(std::string(name) + ".json", trajectory_json(kept[i]).dump() + "\n");
    else out.write(std::string(name) + ".csv", trajectory_csv(kept[i]));
  }

  Table ev{{"path", "time", "kind", "payload"}, {}};
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : events[i]) ev.rows.push_back({i, e.time, std::string(to_string(e.kind)), e.payload});
  out.table("events", ev);

  FrequencyStats total;
  for (const auto& s : stats) total.merge(s);
  std::size_t n_stopped = 0;
  for (char s : stopped) n_stopped += s != 0;

  const bool pair = cfg.target == Target::cbi;
  Table summary{{"statistic", "mean", "se"}, {}};
  const Estimate m1 = moment_of_values(terminal, 1);
  summary.rows.push_back({pair ? "x1_T" : "r_T", m1.mean, m1.se});
  if (pair) {
    const Estimate m2 = moment_of_values(terminal2, 1);
    summary.rows.push_back({"x2_T", m2.mean, m2.se});
  } else {
    const Estimate m2 = moment_of_values(terminal, 2);
    summary.rows.push_back({"r_T^2", m2.mean, m2.se});
  }
  out.table("summary", summary);

  report.results = {{"target", to_string(cfg.target)},
                    {"paths", n},
                    {"terminal_mean", m1.mean},
                    {"terminal_se", m1.se},
                    {"clamps", total.clamps},
                    {"max_clamp_overshoot", total.max_overshoot},
                    {"jump_exits", total.jump_exits},
                    {"stopped_paths", n_stopped}};
  if (total.clamps > 0)
    report.warnings.push_back("clamp events: " + std::to_string(total.clamps) + " (max overshoot " +
                              format_double(total.max_overshoot) + "), logged in events");
  if (total.jump_exits > 0) report.warnings.push_back("jump exits from [0,1]: " + std::to_string(total.jump_exits));
  if (n_stopped > 0) report.warnings.push_back("paths stopped at tau: " + std::to_string(n_stopped) + ", logged in events");
  return report;
}

inline constexpr double kResidualTolerance = 1e-9;
inline constexpr double kDualityZLimit = 4.0;

inline RunReport cmd_dual_rates(const RunConfig& cfg) {
  RunReport report = start_report("dual-rates", cfg);
  auto built = build_rates(cfg.model, cfg.z, cfg.dual.n_max);
  if (auto* v = std::get_if<PositivityViolation>(&built)) {
    positivity_failure(report, *v);
    return report;
  }
  OutputSink out(cfg, report);
  const auto& rates = std::get<DualRates>(built);
  if (out.json_format()) {
    Table t{{"n", "m", "rate"}, {}};
    for (int n = 1; n <= rates.n_max; ++n) {
      const auto& row = rates.row(n);
      for (int m = 0; m < n; ++m) t.rows.push_back({n, m, row.down[static_cast<std::size_t>(m)]});
      for (std::size_t j = 0; j < row.up.size(); ++j) t.rows.push_back({n, n + static_cast<int>(j) + 1, row.up[j]});
      t.rows.push_back({n, "dagger", row.kill});
    }
    out.table("rates", t);
  } else {
    out.write("rates.csv", rates_csv(rates));
  }
  report.results = {{"n_max", rates.n_max}, {"m_tilde", rates.m_tilde}, {"up_range", rates.up_range}};
  return report;
}

inline RunReport cmd_duality(const RunConfig& cfg) {
  RunReport report = start_report("duality", cfg);
  const auto grid = uniform_grid(cfg.dual.r_grid);
  const int residual_n = std::min(cfg.dual.n_max, 6);
  auto residual = generator_identity_residual(cfg.model, cfg.z, residual_n, grid);
  if (auto* v = std::get_if<PositivityViolation>(&residual)) {
    positivity_failure(report, *v);
    return report;
  }
  PathConfig pc = cfg.path;
  pc.horizon = cfg.dual.t;
  if (pc.dt > pc.horizon) throw ConfigError("path.dt", "must not exceed dual.t");
  auto checked = duality_check(cfg.model, cfg.z, cfg.r0, cfg.dual.n0, pc, cfg.dual.n_max);
  if (auto* v = std::get_if<PositivityViolation>(&checked)) {
    positivity_failure(report, *v);
    return report;
  }
  OutputSink out(cfg, report);
  const double res = std::get<double>(residual);
  const auto& reps = std::get<std::vector<DualityReport>>(checked);
  Table t{{"n0", "lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "z_score"}, {}};
  json rows = json::array();
  bool ok = res <= kResidualTolerance;
  for (const auto& r : reps) {
    t.rows.push_back({r.n0, r.lhs.mean, r.lhs.se, r.rhs.mean, r.rhs.se, r.z_score});
    rows.push_back({{"n0", r.n0}, {"lhs", estimate_json(r.lhs)}, {"rhs", estimate_json(r.rhs)}, {"z_score", r.z_score}});
    if (!(r.z_score <= kDualityZLimit)) {
      ok = false;
      report.warnings.push_back("duality z-score " + format_double(r.z_score) + " exceeds " +
                                format_double(kDualityZLimit) + " for n0=" + std::to_string(r.n0));
    }
  }
  out.table("duality", t);
  if (res > kResidualTolerance)
    report.warnings.push_back("generator identity residual " + format_double(res) + " exceeds 1e-9");
  report.results = {{"residual", res}, {"residual_n_max", residual_n}, {"r", cfg.r0}, {"t", cfg.dual.t}, {"checks", rows}};
  if (!ok) report.exit_code = exit_code::check_failed;
  return report;
}

inline bool same_equilibria(const EquilibriumReport& a, const EquilibriumReport& b, double tol = 1e-8) {
  if (a.degenerate || b.degenerate) return a.degenerate == b.degenerate;
  if (a.equilibria.size() != b.equilibria.size()) return false;
  for (std::size_t i = 0; i < a.equilibria.size(); ++i) {
    if (std::abs(a.equilibria[i].location - b.equilibria[i].location) > tol) return false;
    if (a.equilibria[i].stability != b.equilibria[i].stability) return false;
  }
  return true;
}

inline Table large_population_table(const std::vector<LargePopulationRow>& rows) {
  Table t{{"z", "mean_sup_sq", "se"}, {}};
  for (const auto& r : rows) t.rows.push_back({r.z, r.sup_sq.mean, r.sup_sq.se});
  return t;
}

inline ModelFamily family_of(const RunConfig& cfg) {
  if (!cfg.ode.scaling) throw ConfigError("ode.scaling", "required for this command");
  ModelFamily fam{cfg.model, *cfg.ode.scaling};
  check_family(fam.base, fam.scaling);
  return fam;
}

inline RunReport cmd_ode(const RunConfig& cfg) {
  RunReport report = start_report("ode", cfg);
  const ModelFamily fam = family_of(cfg);
  const LimitParams lp = fam.limit();
  OutputSink out(cfg, report);

  const PhaseDiagram pd = phase_diagram(lp, cfg.ode.grid_size);
  Table phase{{"r", "rhs"}, {}};
  for (const auto& [r, v] : pd.samples) phase.rows.push_back({r, v});
  out.table("phase", phase);

  EquilibriumReport closed = closed_form(fam);
  EquilibriumReport numeric = pd.report;
  numeric.case_label = closed.case_label;
  out.write("equilibria.txt", equilibrium_summary(numeric));
  out.write("equilibria.json", json{{"numeric", equilibrium_json(numeric)}, {"closed_form", equilibrium_json(closed)}}.dump(2) + "\n");
  const bool agree = same_equilibria(numeric, closed);
  if (!agree) report.warnings.push_back("closed-form and numeric equilibria disagree, see equilibria.json");

  const Trajectory limit = integrate(lp, cfg.r0, cfg.path.horizon, cfg.path.dt);
  if (out.json_format()) out.write("limit.json", trajectory_json(limit).dump() + "\n");
  else out.write("limit.csv", trajectory_csv(limit));
  if (limit.count(EventKind::clamp) > 0)
    report.warnings.push_back("limit integration clamped " + std::to_string(limit.count(EventKind::clamp)) +
                              " times, logged in limit output");

  json results = {{"scaling", to_string(fam.scaling)},
                  {"equilibria", equilibrium_json(numeric)},
                  {"closed_form", equilibrium_json(closed)},
                  {"agree", agree}};
  if (!cfg.ode.z_list.empty()) {
    const auto rows = large_population_experiment(fam, cfg.r0, cfg.ode.z_list, cfg.path);
    out.table("large_population", large_population_table(rows));
    json conv = json::array();
    for (const auto& r : rows) conv.push_back({{"z", r.z}, {"sup_sq", estimate_json(r.sup_sq)}});
    results["large_population"] = conv;
  }
  report.results = results;
  return report;
}

inline RunReport cmd_converge_cull(const RunConfig& cfg) {
  RunReport report = start_report("converge-cull", cfg);
  OutputSink out(cfg, report);
  const auto conv = culling_convergence(cfg.model, cfg.z, cfg.r0, cfg.culling.n_list, cfg.band, cfg.path);
  Table t{{"n", "mean_r", "se_r", "mean_r2", "se_r2", "diff_r", "diff_r_se", "diff_r2", "diff_r2_se"}, {}};
  t.rows.push_back({"sde", conv.ref1.mean, conv.ref1.se, conv.ref2.mean, conv.ref2.se, 0.0, 0.0, 0.0, 0.0});
  json rows = json::array();
  for (const auto& r : conv.rows) {
    t.rows.push_back({r.n, r.f1.mean, r.f1.se, r.f2.mean, r.f2.se, r.diff1, r.diff1_se, r.diff2, r.diff2_se});
    rows.push_back({{"n", r.n}, {"diff_r", r.diff1}, {"diff_r2", r.diff2}});
  }
  out.table("culling_convergence", t);
  report.results = {{"reference", {{"r", estimate_json(conv.ref1)}, {"r2", estimate_json(conv.ref2)}}}, {"rows", rows}};
  return report;
}

inline RunReport cmd_converge_z(const RunConfig& cfg) {
  RunReport report = start_report("converge-z", cfg);
  const ModelFamily fam = family_of(cfg);
  if (cfg.ode.z_list.empty()) throw ConfigError("ode.z_list", "must be nonempty for converge-z");
  OutputSink out(cfg, report);
  const auto rows = large_population_experiment(fam, cfg.r0, cfg.ode.z_list, cfg.path);
  out.table("large_population", large_population_table(rows));
  json conv = json::array();
  for (const auto& r : rows) conv.push_back({{"z", r.z}, {"sup_sq", estimate_json(r.sup_sq)}});
  report.results = {{"scaling", to_string(fam.scaling)}, {"rows", conv}};
  return report;
}

/// Runs a subcommand by name, timing it and writing report.json into the output directory.
inline RunReport run_command(const std::string& name, const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  if (name == "simulate") report = cmd_simulate(cfg);
  else if (name == "duality") report = cmd_duality(cfg);
  else if (name == "dual-rates") report = cmd_dual_rates(cfg);
  else if (name == "ode") report = cmd_ode(cfg);
  else if (name == "converge-cull") report = cmd_converge_cull(cfg);
  else if (name == "converge-z") report = cmd_converge_z(cfg);
  else throw ConfigError("<command>", "unknown subcommand " + name);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::filesystem::create_directories(cfg.output.dir);
  const auto path = (std::filesystem::path(cfg.output.dir) / "report.json").string();
  report.outputs.push_back(path);
  write_text_file(path, report.to_json().dump(2) + "\n");
  return report;
}

}  // namespace freqsim
