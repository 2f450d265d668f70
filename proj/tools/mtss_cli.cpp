// Command-line front end for the experiment harness.
//
//   mtss run --config grid.json [--dry-run] [--workers k]
//   mtss presets list
//   mtss validate --config grid.json
//
// Exit codes: 0 ok, 1 configuration error, 2 some replications failed.
#include <algorithm>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "mtss/mtss.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartialFailure = 2;

int run(const std::string& path, bool dry_run, unsigned workers, bool quiet) {
  const mtss::GridConfig config = mtss::load_grid_config(path);
  const std::size_t units = config.scenarios.size() * config.agents.size() * config.replications;
  if (dry_run) {
    std::cout << "config ok: " << config.scenarios.size() << " scenario(s) x " << config.agents.size()
              << " agent(s) x " << config.replications << " replication(s), T=" << config.T << " ("
              << units << " runs); nothing written\n";
    return kOk;
  }
  auto progress = [quiet](std::size_t done, std::size_t total) {
    if (!quiet) std::cerr << "\r" << done << "/" << total << std::flush;
  };
  const mtss::GridResult result = mtss::run_grid(config, workers, progress);
  if (!quiet) std::cerr << "\n";
  mtss::write_grid_outputs(config, result);
  for (const auto& c : result.cells) {
    std::cout << c.scenario << " / " << c.agent << ": ";
    if (c.curve)
      std::cout << "mean cumulative regret " << c.curve->mean_cum_regret.back() << " +- "
                << c.curve->stderr_cum_regret.back() << " (" << c.curve->n_replications << " runs)";
    else
      std::cout << "no successful runs";
    for (const auto& [r, msg] : c.failures) std::cout << "\n  replication " << r << " failed: " << msg;
    std::cout << "\n";
  }
  std::cout << "wrote " << config.output_dir << " in " << result.wall_seconds << " s\n";
  return result.any_failure() ? kPartialFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta Thompson sampling experiments for structured bandits"};
  app.set_version_flag("--version", std::string(mtss::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  bool dry_run = false, quiet = false;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());

  auto* run_cmd = app.add_subcommand("run", "Run an experiment grid");
  run_cmd->add_option("--config", config_path, "Grid configuration (JSON)")->required();
  run_cmd->add_flag("--dry-run", dry_run, "Validate the configuration and write nothing");
  run_cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_flag("-q,--quiet", quiet, "No progress output");

  auto* presets_cmd = app.add_subcommand("presets", "Scenario presets");
  auto* list_cmd = presets_cmd->add_subcommand("list", "List presets");
  presets_cmd->require_subcommand(1);

  auto* validate_cmd = app.add_subcommand("validate", "Validate a grid configuration");
  validate_cmd->add_option("--config", config_path, "Grid configuration (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return run(config_path, dry_run, workers, quiet);
    if (*list_cmd) {
      for (const auto& p : mtss::presets())
        std::cout << p.name << "\tT=" << p.T << " M=" << p.replications << "\t" << p.description << "\n";
      return kOk;
    }
    if (*validate_cmd) {
      (void)mtss::load_grid_config(config_path);
      std::cout << "config ok\n";
      return kOk;
    }
  } catch (const mtss::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPartialFailure;
  }
  return kOk;
}
