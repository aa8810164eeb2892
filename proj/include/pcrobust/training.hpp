#pragma once

#include "pcrobust/attacks.hpp"
#include "pcrobust/classifier.hpp"
#include "pcrobust/curriculum.hpp"
#include "pcrobust/mi_estimation.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcr {

enum class ArmKind { kBaseline, kAt, kAtMine, kAtMineCt };

struct TrainingArm {
  ArmKind kind = ArmKind::kBaseline;
  bool use_adversarial = false;
  bool use_mi_term = false;
  bool use_curriculum = false;

  static TrainingArm make(ArmKind kind);
  /// baseline | at | at_mine | at_mine_ct; throws kConfig otherwise.
  static TrainingArm parse(const std::string& name);
  const char* name() const;
};

struct TrainingConfig {
  int steps = 2000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  /// Weight of the adversarial MI term.
  double mi_lambda = 0.1;
  int probe_every = 50;
  double probe_fraction = 0.2;
  /// Estimator updates per classifier step during the first
  /// mine_warmup_steps, then mine_steps_late.
  int mine_warmup_steps = 100;
  int mine_steps_early = 5;
  int mine_steps_late = 1;
  MineConfig mine;
  AdvisorConfig advisor;
  AttackConfig train_attack{AttackKind::kPgd, 0.05, 10, 0.01};
  AttackConfig probe_attack{AttackKind::kPgd, 0.05, 20, 0.01};
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  double clean_loss = 0.0;
  double adv_loss = 0.0;
  double mi_term = 0.0;  // max(0, DV estimate), as it enters the loss
  double eta = 0.0;
  double lambda_adaptive = 0.0;
  double entropy_term = 0.0;
  double f_low = 0.0;
  double total = 0.0;
  bool advisor_active = false;
  std::optional<double> clean_acc;
  std::optional<double> adv_acc;
  std::vector<double> mi_natural;      // per-sample proxies this step
  std::vector<double> mi_adversarial;
};

/// The integrated loss recomputed from a record's logged components with the
/// arm's flags: clean + eta * (adv + lambda * mi) + Lambda * gamma(f_low),
/// gamma(f) = f.
double reconstruct_total(const StepRecord& rec, const TrainingArm& arm, double mi_lambda);

struct LossBreakdown {
  double clean_loss = 0.0;
  double adv_loss = 0.0;
  double mi_term = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
  /// Gradient with respect to the classifier parameters (empty unless asked).
  Eigen::VectorXd grad;
  std::optional<MIBatchEstimate> adversarial_estimate;
};

/// Evaluates the integrated loss on `batch` given precomputed adversarial
/// records (one per cloud, required when the arm is adversarial). The MI term
/// is the DV estimate of T_A on (pooled rho, y') with T_A frozen; its gradient
/// reaches the classifier through y'.
LossBreakdown integrated_loss(const Classifier& model, std::span<const PointCloud> batch,
                              std::span<const PerturbationRecord> adversarial,
                              const StatisticNetwork* adversarial_T,
                              const CurriculumSignal& signal, const TrainingArm& arm,
                              double mi_lambda, Rng& rng, bool want_grad);

/// Convenience form that crafts the adversarial batch with `attack`.
LossBreakdown integrated_loss(const Classifier& model, std::span<const PointCloud> batch,
                              const AttackConfig& attack, const StatisticNetwork* adversarial_T,
                              const CurriculumSignal& signal, const TrainingArm& arm,
                              double mi_lambda, Rng& rng, bool want_grad);

struct DatasetSplit {
  std::vector<PointCloud> train;
  std::vector<PointCloud> probe;
};

/// Stratified split; the same seed always yields the same probe set.
DatasetSplit split_dataset(const std::vector<PointCloud>& clouds, double probe_fraction,
                           std::uint64_t seed);

struct RunResult {
  std::vector<StepRecord> log;
  Classifier model;
  std::optional<DualEstimators> estimators;
  double final_clean_acc = 0.0;
  double final_adv_acc = 0.0;
  std::uint64_t attack_calls = 0;
  std::uint64_t estimator_calls = 0;
};

using StepSink = std::function<void(const StepRecord&)>;

/// Attack -> estimator update -> classifier step -> summary statistics ->
/// advisor update, gated by the arm. Serial and deterministic given seeds.
RunResult run_arm(const DatasetSplit& data, const TrainingArm& arm,
                  const TrainingConfig& config, const ClassifierConfig& classifier,
                  const StepSink& sink = {});

struct PinskerReport {
  double clean_error = 0.0;
  double adversarial_error = 0.0;
  double delta_pe = 0.0;
  double mi = 0.0;
  /// Mean total-variation distance (exact oracle only; NaN otherwise).
  double mean_tv = 0.0;
  double bound = 0.0;     // sqrt(mi / 2)
  double eps_stat = 0.0;  // 95% binomial half-width
  bool holds = false;
  int samples = 0;
};

/// Empirical check of delta_pe <= sqrt(I_A / 2) + eps_stat on a probe set of
/// at least 200 clouds.
PinskerReport pinsker_check(const Classifier& model, const AttackConfig& attack,
                            std::span<const PointCloud> probe, const StatisticNetwork& adversarial_T,
                            std::uint64_t seed);

/// Exact enumeration for a fixed ground truth y, rho ~ Bernoulli(p) and
/// y' = y XOR rho, with a clean predictor that is always right.
PinskerReport pinsker_xor_channel(double p);

struct ForgettingReport {
  double max_drawdown = 0.0;
  double final_gap = 0.0;
  double peak = 0.0;
};

ForgettingReport forgetting_metrics(std::span<const double> accuracy_curve);
ForgettingReport forgetting_metrics(const std::vector<StepRecord>& log);

}  // namespace pcr
