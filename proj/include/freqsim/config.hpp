#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "freqsim/measures.hpp"
#include "freqsim/model.hpp"
#include "freqsim/ode.hpp"
#include "freqsim/simulate.hpp"

namespace freqsim {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)), message_(message) {}
  const std::string& path() const { return path_; }
  const std::string& message() const { return message_; }

 private:
  std::string path_;
  std::string message_;
};

enum class Target { culled, cbi, culling };

inline const char* to_string(Target t) {
  switch (t) {
    case Target::culled: return "culled";
    case Target::cbi: return "cbi";
    case Target::culling: return "culling";
  }
  return "culled";
}

struct DualConfig {
  std::vector<int> n0 = {1};
  int n_max = 16;
  double t = 0.5;
  int r_grid = 21;
};

struct OdeConfig {
  std::optional<Scaling> scaling;
  std::vector<double> z_list;
  int grid_size = 101;
};

struct CullingConfig {
  int n = 16;
  std::vector<int> n_list = {4, 16, 64};
};

struct OutputConfig {
  std::string dir = "out";
  std::string format = "csv";
  int max_trajectory_files = 20;
};

struct RunConfig {
  ModelParams model;
  double z = 1.0;
  double r0 = 0.5;
  std::optional<std::pair<double, double>> x0;
  PathConfig path;
  Target target = Target::culled;
  StopBand band;
  CullingConfig culling;
  DualConfig dual;
  OdeConfig ode;
  OutputConfig output;
};

namespace config_detail {

inline std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline std::string index(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(join(path, it.key()), "unknown key");
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
  return x;
}

inline double positive(const json& v, const std::string& path) {
  const double x = number(v, path);
  if (!(x > 0.0)) throw ConfigError(path, "must be positive");
  return x;
}

inline double nonnegative(const json& v, const std::string& path) {
  const double x = number(v, path);
  if (x < 0.0) throw ConfigError(path, "must be nonnegative");
  return x;
}

inline long long integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "must be an integer");
  return v.get<long long>();
}

inline int positive_int(const json& v, const std::string& path) {
  const long long x = integer(v, path);
  if (x < 1 || x > 1'000'000'000) throw ConfigError(path, "must be a positive integer");
  return static_cast<int>(x);
}

inline std::uint64_t seed_value(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigError(path, "must be a nonnegative 64-bit integer");
}

inline std::pair<double, double> pair_of(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(path, "must be an array of two numbers");
  return {number(v[0], index(path, 0)), number(v[1], index(path, 1))};
}

inline PolynomialMalthusian polynomial(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "must be an array of coefficients");
  std::vector<double> c;
  for (std::size_t i = 0; i < v.size(); ++i) c.push_back(number(v[i], index(path, i)));
  return PolynomialMalthusian(std::move(c));
}

inline JumpMeasure measure(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "must be an array of [w1, w2, mass] triples");
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = index(path, i);
    if (!v[i].is_array() || v[i].size() != 3) throw ConfigError(p, "must be a [w1, w2, mass] triple");
    Atom a{number(v[i][0], index(p, 0)), number(v[i][1], index(p, 1)), number(v[i][2], index(p, 2))};
    if (auto err = check_atom(a)) throw ConfigError(p, *err);
    atoms.push_back(a);
  }
  return JumpMeasure(std::move(atoms));
}

inline ModelParams model(const json& v, const std::string& path) {
  reject_unknown(v, path, {"c", "eta", "b11", "b12", "b21", "b22", "mu1", "mu2", "nu"});
  ModelParams p;
  if (v.contains("c")) {
    auto [a, b] = pair_of(v["c"], join(path, "c"));
    p.c1 = a;
    p.c2 = b;
  }
  if (v.contains("eta")) {
    auto [a, b] = pair_of(v["eta"], join(path, "eta"));
    p.eta1 = a;
    p.eta2 = b;
  }
  if (v.contains("b11")) p.b11 = polynomial(v["b11"], join(path, "b11"));
  if (v.contains("b12")) p.b12 = polynomial(v["b12"], join(path, "b12"));
  if (v.contains("b21")) p.b21 = polynomial(v["b21"], join(path, "b21"));
  if (v.contains("b22")) p.b22 = polynomial(v["b22"], join(path, "b22"));
  if (v.contains("mu1")) p.mu1 = measure(v["mu1"], join(path, "mu1"));
  if (v.contains("mu2")) p.mu2 = measure(v["mu2"], join(path, "mu2"));
  if (v.contains("nu")) p.nu = measure(v["nu"], join(path, "nu"));
  for (const auto& viol : validate_params(p)) {
    std::string field = viol.field;
    if (field == "c1" || field == "c2") field = "c";
    if (field == "eta1" || field == "eta2") field = "eta";
    throw ConfigError(join(path, field), viol.message);
  }
  return p;
}

inline std::vector<int> int_list(const json& v, const std::string& path) {
  if (v.is_number_integer()) return {positive_int(v, path)};
  if (!v.is_array() || v.empty()) throw ConfigError(path, "must be a positive integer or a nonempty array of them");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(positive_int(v[i], index(path, i)));
  return out;
}

}  // namespace config_detail

inline RunConfig parse_config(const json& j) {
  using namespace config_detail;
  reject_unknown(j, "", {"model", "z", "r0", "x0", "path", "target", "band", "culling", "dual", "ode", "output"});
  RunConfig c;
  if (!j.contains("model")) throw ConfigError("model", "required");
  c.model = model(j["model"], "model");
  if (j.contains("z")) c.z = positive(j["z"], "z");
  if (j.contains("r0")) {
    c.r0 = number(j["r0"], "r0");
    if (c.r0 < 0.0 || c.r0 > 1.0) throw ConfigError("r0", "must lie in [0, 1]");
  }
  if (j.contains("x0")) {
    auto x = pair_of(j["x0"], "x0");
    if (x.first < 0.0 || x.second < 0.0) throw ConfigError("x0", "components must be nonnegative");
    c.x0 = x;
  }
  if (j.contains("path")) {
    const json& p = j["path"];
    reject_unknown(p, "path", {"dt", "horizon", "seed", "n_paths"});
    if (p.contains("dt")) c.path.dt = positive(p["dt"], "path.dt");
    if (p.contains("horizon")) c.path.horizon = positive(p["horizon"], "path.horizon");
    if (p.contains("seed")) c.path.seed = seed_value(p["seed"], "path.seed");
    if (p.contains("n_paths")) c.path.n_paths = static_cast<std::size_t>(positive_int(p["n_paths"], "path.n_paths"));
    if (c.path.dt > c.path.horizon) throw ConfigError("path.dt", "must not exceed path.horizon");
  }
  if (j.contains("target")) {
    if (!j["target"].is_string()) throw ConfigError("target", "must be one of culled, cbi, culling");
    const auto t = j["target"].get<std::string>();
    if (t == "culled") c.target = Target::culled;
    else if (t == "cbi") c.target = Target::cbi;
    else if (t == "culling") c.target = Target::culling;
    else throw ConfigError("target", "must be one of culled, cbi, culling");
  }
  if (j.contains("band")) {
    const json& b = j["band"];
    reject_unknown(b, "band", {"eps", "cap"});
    if (b.contains("eps")) c.band.eps = positive(b["eps"], "band.eps");
    if (b.contains("cap")) c.band.cap = positive(b["cap"], "band.cap");
    if (!(c.band.eps < c.band.cap)) throw ConfigError("band", "need eps < cap");
  }
  if (j.contains("culling")) {
    const json& b = j["culling"];
    reject_unknown(b, "culling", {"n", "n_list"});
    if (b.contains("n")) c.culling.n = positive_int(b["n"], "culling.n");
    if (b.contains("n_list")) c.culling.n_list = int_list(b["n_list"], "culling.n_list");
  }
  if (j.contains("dual")) {
    const json& d = j["dual"];
    reject_unknown(d, "dual", {"n0", "n_max", "t", "r_grid"});
    if (d.contains("n0")) c.dual.n0 = int_list(d["n0"], "dual.n0");
    if (d.contains("n_max")) c.dual.n_max = positive_int(d["n_max"], "dual.n_max");
    if (d.contains("t")) c.dual.t = positive(d["t"], "dual.t");
    if (d.contains("r_grid")) {
      c.dual.r_grid = positive_int(d["r_grid"], "dual.r_grid");
      if (c.dual.r_grid < 2) throw ConfigError("dual.r_grid", "must be at least 2");
    }
  }
  if (j.contains("ode")) {
    const json& o = j["ode"];
    reject_unknown(o, "ode", {"scaling", "z_list", "grid_size"});
    if (o.contains("scaling")) {
      const auto s = o["scaling"].is_string() ? o["scaling"].get<std::string>() : std::string();
      if (s == "linear") c.ode.scaling = Scaling::linear;
      else if (s == "logistic") c.ode.scaling = Scaling::logistic;
      else throw ConfigError("ode.scaling", "must be linear or logistic");
    }
    if (o.contains("z_list")) {
      const json& zl = o["z_list"];
      if (!zl.is_array()) throw ConfigError("ode.z_list", "must be an array of positive numbers");
      for (std::size_t i = 0; i < zl.size(); ++i) c.ode.z_list.push_back(positive(zl[i], index("ode.z_list", i)));
    }
    if (o.contains("grid_size")) {
      c.ode.grid_size = positive_int(o["grid_size"], "ode.grid_size");
      if (c.ode.grid_size < 2) throw ConfigError("ode.grid_size", "must be at least 2");
    }
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    reject_unknown(o, "output", {"dir", "format", "max_trajectory_files"});
    if (o.contains("dir")) {
      if (!o["dir"].is_string() || o["dir"].get<std::string>().empty())
        throw ConfigError("output.dir", "must be a nonempty string");
      c.output.dir = o["dir"].get<std::string>();
    }
    if (o.contains("format")) {
      const auto f = o["format"].is_string() ? o["format"].get<std::string>() : std::string();
      if (f != "csv" && f != "json") throw ConfigError("output.format", "must be csv or json");
      c.output.format = f;
    }
    if (o.contains("max_trajectory_files")) {
      const long long m = integer(o["max_trajectory_files"], "output.max_trajectory_files");
      if (m < 0) throw ConfigError("output.max_trajectory_files", "must be nonnegative");
      c.output.max_trajectory_files = static_cast<int>(m);
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open " + file);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline json to_json(const JumpMeasure& m) {
  json a = json::array();
  for (const auto& at : m.atoms()) a.push_back({at.w1, at.w2, at.mass});
  return a;
}

/// The effective configuration in canonical form; parse_config accepts it unchanged.
inline json to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"c", {c.model.c1, c.model.c2}},
                {"eta", {c.model.eta1, c.model.eta2}},
                {"b11", c.model.b11.coeffs()},
                {"b12", c.model.b12.coeffs()},
                {"b21", c.model.b21.coeffs()},
                {"b22", c.model.b22.coeffs()},
                {"mu1", to_json(c.model.mu1)},
                {"mu2", to_json(c.model.mu2)},
                {"nu", to_json(c.model.nu)}};
  j["z"] = c.z;
  j["r0"] = c.r0;
  if (c.x0) j["x0"] = {c.x0->first, c.x0->second};
  j["path"] = {{"dt", c.path.dt}, {"horizon", c.path.horizon}, {"seed", c.path.seed}, {"n_paths", c.path.n_paths}};
  j["target"] = to_string(c.target);
  j["band"] = {{"eps", c.band.eps}, {"cap", c.band.cap}};
  j["culling"] = {{"n", c.culling.n}, {"n_list", c.culling.n_list}};
  j["dual"] = {{"n0", c.dual.n0}, {"n_max", c.dual.n_max}, {"t", c.dual.t}, {"r_grid", c.dual.r_grid}};
  json ode = {{"z_list", c.ode.z_list}, {"grid_size", c.ode.grid_size}};
  if (c.ode.scaling) ode["scaling"] = to_string(*c.ode.scaling);
  j["ode"] = std::move(ode);
  j["output"] = {{"dir", c.output.dir}, {"format", c.output.format},
                 {"max_trajectory_files", c.output.max_trajectory_files}};
  return j;
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace freqsim
