#pragma once

// Config-driven orchestration: the four training arms over several seeds,
// attack benchmarking of saved checkpoints, and plot-data emission.

#include "pcrobust/error.hpp"
#include "pcrobust/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pcr {

struct ExperimentConfig {
  std::string name = "experiment";
  SyntheticDatasetSpec dataset;
  ClassifierConfig classifier;
  /// Named attack set; train_attack, probe_attack and bench_attacks refer to
  /// these names.
  std::map<std::string, AttackConfig> attacks{
      {"pgd", {AttackKind::kPgd, 0.05, 10, 0.01}},
      {"pgd20", {AttackKind::kPgd, 0.05, 20, 0.01}}};
  std::string train_attack = "pgd";
  std::string probe_attack = "pgd20";
  std::vector<std::string> bench_attacks;  // empty: every configured attack
  MineConfig mine;
  AdvisorConfig advisor;
  /// Steps, batch size, learning rate, lambda and estimator cadence. Its
  /// mine/advisor/attack/seed members are filled from the fields above.
  TrainingConfig training;
  std::vector<std::string> arms{"baseline", "at", "at_mine", "at_mine_ct"};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";
  bool serial = true;

  /// Resolves names and cross-field constraints; kConfig messages start with
  /// the dotted field path.
  void validate() const;

  /// TrainingConfig for one seed with every reference resolved.
  TrainingConfig training_for(std::uint64_t seed) const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& v);
void from_json(const nlohmann::json& j, ExperimentConfig& v);
void to_json(nlohmann::json& j, const TrainingConfig& v);
void from_json(const nlohmann::json& j, TrainingConfig& v);
void to_json(nlohmann::json& j, const StepRecord& v);
void from_json(const nlohmann::json& j, StepRecord& v);

/// Parses and validates. Throws kConfig (path-prefixed) on any problem.
ExperimentConfig parse_experiment(const std::string& text);
ExperimentConfig load_experiment(const std::string& path);

/// The dataset and its probe split exactly as every arm sees them.
DatasetSplit experiment_data(const ExperimentConfig& config);

struct ArmOutcome {
  std::string arm;
  std::uint64_t seed = 0;
  std::string directory;  // relative to the run directory
  double final_clean_acc = 0.0;
  double final_adv_acc = 0.0;
  ForgettingReport forgetting;
  std::uint64_t attack_calls = 0;
  std::uint64_t estimator_calls = 0;
};

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::vector<ArmOutcome> outcomes;
};

/// Validates, then creates <output_root>/<output_dir>/<name>-<stamp>/ with
/// config.json, one subdirectory per arm and seed (log.jsonl,
/// checkpoint.bin), summary.json, summary.csv, plots/ and index.json.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& output_root);

struct BenchRow {
  std::string model;
  double clean_acc = 0.0;
  std::vector<double> attack_acc;  // aligned with BenchReport::attacks
};

struct BenchReport {
  std::vector<std::string> attacks;
  std::vector<BenchRow> rows;
  int probe_size = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Clean and per-attack probe accuracy for each checkpoint. Rows are labelled
/// by the checkpoint's parent directory name. Throws kIo for a missing file.
BenchReport benchmark_attacks(const ExperimentConfig& config,
                              const std::vector<std::string>& checkpoints);

/// Writes bench.json and bench.csv under a fresh stamped directory and
/// returns it.
std::filesystem::path write_bench(const ExperimentConfig& config, const BenchReport& report,
                                  const std::filesystem::path& output_root);

/// Reads config.json, summary.json and each log.jsonl under run_dir and
/// writes plots/accuracy.csv, plots/eta.csv and plots/mi_histogram.csv.
/// A missing log field raises kSchema naming the file, line and field.
/// Returns the written paths relative to run_dir.
std::vector<std::string> emit_plots(const std::filesystem::path& run_dir);

inline constexpr int kHistogramBins = 20;

struct MIHistogram {
  std::vector<double> edges;  // kHistogramBins + 1
  std::vector<int> natural;
  std::vector<int> adversarial;
};

/// Common-edge histogram of the two streams.
MIHistogram mi_histogram(std::span<const double> natural, std::span<const double> adversarial,
                         int bins = kHistogramBins);

}  // namespace pcr
