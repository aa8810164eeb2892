#pragma once

#include "pcrobust/core_data.hpp"
#include "pcrobust/nn.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pcr {

enum class MIKind { kNatural, kAdversarial, kTotal };

/// T_phi: maps (input representation, logit vector) pairs to a scalar.
/// Inputs are concatenated and fed through a ReLU MLP with a linear output.
class StatisticNetwork {
 public:
  StatisticNetwork(int input_dim, int logit_dim, std::vector<int> hidden = {128, 128},
                   std::uint64_t seed = 0);

  int input_dim() const { return input_dim_; }
  int logit_dim() const { return logit_dim_; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::VectorXd evaluate(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& logits) const;
  Eigen::VectorXd forward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& logits,
                          DenseStack::Cache* cache) const;
  /// dT holds one upstream gradient per row. Writes the logit-side input
  /// gradient when dlogits is non-null.
  void backward(const DenseStack::Cache& cache, const Eigen::VectorXd& dT,
                Eigen::VectorXd* dparams, Eigen::MatrixXd* dlogits) const;

 private:
  int input_dim_;
  int logit_dim_;
  DenseStack stack_;
  Eigen::VectorXd params_;
};

/// Row-aligned (input representation, logits) pairs.
struct PairBatch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd logits;

  Eigen::Index size() const { return inputs.rows(); }
};

/// Pairs each input with the logits of row perm[i].
PairBatch shuffled_pairs(const PairBatch& positives, const std::vector<int>& perm);

struct MIBatchEstimate {
  double value = 0.0;
  double joint_term = 0.0;
  double marginal_term = 0.0;
  Eigen::VectorXd per_sample_T;
  MIKind kind = MIKind::kAdversarial;
};

/// Donsker-Varadhan estimate: mean T over positives minus the stabilized
/// log-mean-exp of T over negatives.
MIBatchEstimate dv_estimate(const StatisticNetwork& T, const PairBatch& positives,
                            const PairBatch& negatives, MIKind kind = MIKind::kAdversarial);

/// Same bound from precomputed statistic values.
MIBatchEstimate dv_from_values(const Eigen::VectorXd& joint, const Eigen::VectorXd& marginal,
                               MIKind kind);

/// Mean and per-coordinate max over points: a fixed 6-vector for any cloud or
/// perturbation field.
Eigen::RowVectorXd pooled_embedding(const Points& points);

struct MineConfig {
  std::vector<int> hidden{128, 128};
  double learning_rate = 1e-3;
  /// Decay of the moving average that replaces the marginal-term denominator
  /// in the gradient.
  double ema_decay = 0.99;
  /// Weight of the cross term that penalises the other view's pairs. Any
  /// positive value leaves the objective unbounded once the two views are
  /// separable, so it is off by default.
  double cross_weight = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const MineConfig&) const = default;
};

/// One statistic network plus its optimizer and moving-average state.
class MineEstimator {
 public:
  MineEstimator(int input_dim, int logit_dim, const MineConfig& config, MIKind kind);

  const StatisticNetwork& network() const { return net_; }
  StatisticNetwork& network() { return net_; }
  MIKind kind() const { return kind_; }
  const MineConfig& config() const { return config_; }

  /// One ascent step on DV(positives, negatives) - cross_weight * (mean T over
  /// cross - log-mean-exp T over negatives). `cross` may be null. Returns the
  /// pre-step DV estimate; throws kDivergence above 20 nats.
  MIBatchEstimate train_step(const PairBatch& positives, const PairBatch& negatives,
                             const PairBatch* cross);

  MIBatchEstimate estimate(const PairBatch& positives, const PairBatch& negatives) const;

 private:
  MineConfig config_;
  MIKind kind_;
  StatisticNetwork net_;
  Adam optimizer_;
  double ema_ = 0.0;
  long long ema_steps_ = 0;
};

/// Clean inputs, adversarial inputs, perturbations and the model's logits on
/// the adversarial inputs, one row per sample.
struct MIBatch {
  Eigen::MatrixXd clean;        // representation of X
  Eigen::MatrixXd adversarial;  // representation of X'
  Eigen::MatrixXd perturbation; // representation of rho
  Eigen::MatrixXd logits;       // y'
};

/// T_N sees (X, y') with (X', y') as its cross term; T_A sees (rho, y') with
/// the clean, zero-perturbation pairs (0, y') as its cross term.
struct DualEstimators {
  MineEstimator natural;
  MineEstimator adversarial;

  DualEstimators(int input_dim, int logit_dim, const MineConfig& config);

  struct Estimates {
    MIBatchEstimate natural;
    MIBatchEstimate adversarial;
  };

  Estimates train_step(const MIBatch& batch, Rng& rng);
  Estimates estimate(const MIBatch& batch, Rng& rng) const;
};

/// Runs `steps` joint updates drawing a fresh batch each time and returns the
/// estimates of the final step.
DualEstimators::Estimates train_estimators(DualEstimators& estimators,
                                           const std::function<MIBatch(Rng&)>& stream,
                                           int steps, Rng& rng);

/// Total estimator training steps in this process.
std::uint64_t estimator_invocations();

struct MIDecomposition {
  double total = 0.0;
  double natural = 0.0;
  double adversarial = 0.0;
  /// total - (natural + adversarial): the empirical size of the terms the
  /// additive approximation drops.
  double residual = 0.0;
};

MIDecomposition decompose_mi(double total, double natural, double adversarial);

/// Pointwise DV contribution per positive pair; its mean is the estimate.
Eigen::VectorXd per_sample_mi_proxy(const MIBatchEstimate& estimate);

struct MISummaryStats {
  double mean_IN = 0.0;
  double mean_IA = 0.0;
  double var_IN = 0.0;
  double var_IA = 0.0;
  double skew_IN = 0.0;
  double skew_IA = 0.0;
  double f_low = 0.0;
  double H_IN = 0.0;
  double H_IA = 0.0;

  Eigen::VectorXd as_vector() const;
};

inline constexpr int kMinSummaryWindow = 30;

/// Bias-corrected (Fisher G1) sample skewness. Returns 0 for zero variance.
double sample_skewness(std::span<const double> values);
double sample_variance(std::span<const double> values);

/// Entropy (nats) of the cluster frequencies implied by `assignments`.
double assignment_entropy(std::span<const int> assignments, int num_clusters);

/// Statistics over sliding windows of per-sample proxies. Cluster index 0 is
/// the low-MI cluster. Throws kInsufficientData for windows shorter than 30.
MISummaryStats summarize(std::span<const double> natural, std::span<const double> adversarial,
                         std::span<const int> natural_clusters,
                         std::span<const int> adversarial_clusters, int num_clusters = 3);

}  // namespace pcr
