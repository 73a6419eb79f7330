#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hbm/commands.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string format;
  bool print_config = false;
};

hbm::RunConfig load_config(const Options& o) {
  hbm::RunConfig cfg = o.config.empty() ? hbm::RunConfig() : hbm::RunConfig::from_file(o.config);
  cfg.apply_env("HBM");
  if (o.seed) cfg.set("run", "seed", std::to_string(*o.seed));
  if (o.workers) cfg.set("run", "workers", std::to_string(*o.workers));
  if (!o.format.empty()) cfg.set("run", "format", o.format);
  const std::string fmt = cfg.get_string("run", "format");
  if (fmt != "csv" && fmt != "json") throw hbm::ConfigError("run.format", "must be csv or json");
  return cfg;
}

int run(const std::string& command, const Options& o) {
  const hbm::RunConfig cfg = load_config(o);
  if (o.print_config) {
    std::cout << cfg.serialize();
    return hbm::kExitPass;
  }
  const hbm::CommandOutput result = hbm::run_command(command, cfg);
  const std::string fmt = cfg.get_string("run", "format");
  if (o.out.empty()) {
    hbm::emit(result, cfg, fmt, std::cout, &std::cerr);
  } else {
    std::ofstream table(o.out, std::ios::binary);
    if (!table) throw hbm::ConfigError("--out", "cannot open '" + o.out + "'");
    if (fmt == "json") {
      hbm::emit(result, cfg, fmt, table, nullptr);
    } else {
      std::ofstream summary(o.out + ".json", std::ios::binary);
      if (!summary) throw hbm::ConfigError("--out", "cannot open '" + o.out + ".json'");
      hbm::emit(result, cfg, fmt, table, &summary);
    }
  }
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drifted hyperbolic Brownian motion: kernels, parametrix density and unbiased Monte Carlo"};
  app.set_version_flag("--version", std::string(hbm::kVersion));
  app.require_subcommand(0, 1);
  Options opt;
  app.add_option("--config", opt.config, "INI run config")->check(CLI::ExistingFile);
  app.add_option("--seed", opt.seed, "override run.seed");
  app.add_option("--workers", opt.workers, "override run.workers");
  app.add_option("--out", opt.out, "write the table here (summary to <out>.json)");
  app.add_option("--format", opt.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_flag("--print-config", opt.print_config, "print the effective config and exit");

  const char* commands[][2] = {
      {"kernels", "cross-check the heat kernel representations"},
      {"validate-drift", "probe the growth, Lipschitz and boundedness conditions of a drift"},
      {"estimate", "unbiased Monte Carlo estimates of E f(Z_t)"},
      {"compare", "unbiased estimator against the Euler oracle"},
      {"density", "parametrix series against the weighted histogram"},
      {"selftest", "reduced-size invariant suite"},
  };
  for (const auto& c : commands) {
    app.add_subcommand(c[0], c[1])->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : hbm::kExitConfig;
  }
  if (app.get_subcommands().empty() && !opt.print_config) {
    std::cerr << "a subcommand is required\n" << app.help();
    return hbm::kExitConfig;
  }
  const std::string command =
      app.get_subcommands().empty() ? std::string() : app.get_subcommands().front()->get_name();
  try {
    return run(command, opt);
  } catch (const hbm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return hbm::kExitConfig;
  } catch (const hbm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return hbm::kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return hbm::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return hbm::kExitNumerical;
  }
}
