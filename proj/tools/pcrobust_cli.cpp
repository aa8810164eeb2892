// pcrobust run <config> | bench <config> --checkpoint <path>... | plots <run-dir>
//
// Exit status: 0 success, 1 runtime failure, 2 invalid configuration or
// arguments. Outputs go under $PCR_OUTPUT_ROOT (default: current directory).

#include "pcrobust/pcrobust.h"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

namespace {

int exit_code(pcr_status st) {
  if (st == PCR_OK) return 0;
  if (st == PCR_ERR_CONFIG || st == PCR_ERR_INVALID_ARGUMENT) return 2;
  return 1;
}

int report(pcr_status st, const char* what) {
  if (st != PCR_OK) {
    std::fprintf(stderr, "pcrobust: %s failed (%s): %s\n", what, pcr_status_name(st),
                 pcr_last_error());
  }
  return exit_code(st);
}

std::string output_root() {
  const char* env = std::getenv("PCR_OUTPUT_ROOT");
  return env && *env ? env : ".";
}

struct Experiment {
  pcr_experiment* handle = nullptr;
  ~Experiment() { pcr_experiment_free(handle); }
};

pcr_status open_experiment(const std::string& path, const std::optional<std::uint64_t>& seed,
                           bool serial, Experiment& exp) {
  pcr_status st = pcr_experiment_load(path.c_str(), &exp.handle);
  if (st != PCR_OK) return st;
  if (seed) st = pcr_experiment_set_seed(exp.handle, *seed);
  if (st == PCR_OK && serial) st = pcr_experiment_set_serial(exp.handle, 1);
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarially robust point-cloud training with MI regularization"};
  app.require_subcommand(1);
  app.fallthrough();
  bool serial = false;
  std::optional<std::uint64_t> seed;
  app.add_flag("--serial", serial, "Run arms and seeds one after another (deterministic)");
  app.add_option("--seed", seed, "Replace the configured seed list with this seed");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Train every configured arm and seed");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::string bench_config;
  std::vector<std::string> checkpoints;
  auto* bench = app.add_subcommand("bench", "Attack accuracy table for trained checkpoints");
  bench->add_option("config", bench_config, "Experiment config (JSON)")->required();
  bench->add_option("--checkpoint", checkpoints, "Checkpoint file (repeatable)")->required();

  std::string run_dir;
  auto* plots = app.add_subcommand("plots", "Regenerate plot data for a run directory");
  plots->add_option("run_dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  char path[4096];
  if (*run) {
    Experiment exp;
    pcr_status st = open_experiment(config_path, seed, serial, exp);
    if (st != PCR_OK) return report(st, "config");
    st = pcr_experiment_run(exp.handle, output_root().c_str(), path, sizeof path);
    if (st != PCR_OK) return report(st, "run");
    std::printf("%s\n", path);
    return 0;
  }
  if (*bench) {
    Experiment exp;
    pcr_status st = open_experiment(bench_config, seed, serial, exp);
    if (st != PCR_OK) return report(st, "config");
    std::vector<const char*> ptrs;
    for (const auto& c : checkpoints) ptrs.push_back(c.c_str());
    st = pcr_experiment_bench(exp.handle, ptrs.data(), ptrs.size(), output_root().c_str(), path,
                              sizeof path);
    if (st == PCR_ERR_CONFIG) st = PCR_ERR_IO;  // the config itself already validated
    if (st != PCR_OK) return report(st, "bench");
    std::printf("%s\n", path);
    return 0;
  }
  const pcr_status st = pcr_emit_plots(run_dir.c_str());
  if (st != PCR_OK) return report(st, "plots");
  std::printf("%s/plots\n", run_dir.c_str());
  return 0;
}
