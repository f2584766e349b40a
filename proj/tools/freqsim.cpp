// freqsim: command-line front end for the culled frequency toolkit.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "freqsim/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  std::optional<std::string> format;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("FREQSIM_SEED");
  if (!s || !*s) return std::nullopt;
  std::uint64_t v = 0;
  const char* end = s + std::char_traits<char>::length(s);
  auto [p, ec] = std::from_chars(s, end, v);
  if (ec != std::errc{} || p != end) throw freqsim::ConfigError("FREQSIM_SEED", "must be an unsigned 64-bit integer");
  return v;
}

void print_error(const freqsim::json& err) { std::cerr << err.dump() << "\n"; }

int run(const std::string& command, const Flags& flags) {
  using namespace freqsim;
  try {
    RunConfig cfg = load_config(flags.config);
    if (auto s = env_seed()) cfg.path.seed = *s;
    if (flags.seed) cfg.path.seed = *flags.seed;
    if (flags.out) cfg.output.dir = *flags.out;
    if (flags.format) cfg.output.format = *flags.format;
    if (flags.threads) set_default_threads(*flags.threads);

    const RunReport report = run_command(command, cfg);
    if (!report.error.is_null()) print_error(report.error);
    std::cout << command << ": exit " << report.exit_code << ", " << report.outputs.size() << " outputs, "
              << report.warnings.size() << " warnings, wall-clock " << format_double(report.wall_clock_seconds)
              << " s\n";
    for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
    return report.exit_code;
  } catch (const ConfigError& e) {
    print_error({{"error", "config"}, {"path", e.path()}, {"message", e.message()}});
    return exit_code::config;
  } catch (const ScalingMismatch& e) {
    print_error({{"error", "scaling"}, {"message", e.what()}});
    return exit_code::scaling;
  } catch (const DualPositivityError& e) {
    print_error({{"error", "positivity"}, {"message", e.what()}});
    return exit_code::positivity;
  } catch (const std::exception& e) {
    print_error({{"error", "numeric"}, {"message", e.what()}});
    return exit_code::numeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and duality checks for the culled frequency process of a two-type CBI"};
  app.require_subcommand(1);
  Flags flags;

  const char* commands[][2] = {
      {"simulate", "simulate culled frequency, CBI or culling-chain paths"},
      {"duality", "generator identity residual and Monte Carlo moment duality"},
      {"dual-rates", "write the dual block-counting rate table"},
      {"ode", "large-population limit: phase line, equilibria, optional z sweep"},
      {"converge-cull", "culling chain against the culled frequency SDE"},
      {"converge-z", "culled frequency against its large-population limit"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "seed (overrides FREQSIM_SEED and the config)");
    sub->add_option("--threads", flags.threads, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--format", flags.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : freqsim::exit_code::config;
  }
  for (const auto& [name, help] : commands) {
    if (app.got_subcommand(name)) return run(name, flags);
  }
  return freqsim::exit_code::config;
}
