#pragma once

#include "pcrobust/mi_estimation.hpp"
#include "pcrobust/nn.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pcr {

inline constexpr int kNumMIClusters = 3;

/// k-means result with clusters relabelled so index 0 is the lowest centroid.
struct MIClusters {
  std::array<double, kNumMIClusters> centroids{};
  std::vector<int> assignments;
  std::array<double, kNumMIClusters> frequencies{};
};

/// 1-D k-means with k-means++ seeding, keeping the lowest-inertia of
/// `restarts` runs. Throws kDegenerate with fewer than three distinct values.
MIClusters fit_clusters(std::span<const double> values, std::uint64_t seed, int restarts = 10);

/// -sum p ln p, with 0 ln 0 = 0.
double entropy_of(std::span<const double> frequencies);
double entropy_regularizer(const MIClusters& clusters);

/// alpha * (1 - f_low) * exp(-beta * H).
double adaptive_lambda(double f_low, double entropy, double alpha, double beta);

struct AdvisorConfig {
  double alpha = 1.0;
  double beta = 1.0;
  int window = 64;
  std::vector<int> advisor_widths{16, 16};
  /// Fraction of the run over which the anchor target ramps linearly 0 -> 1.
  double anchor_warmup_fraction = 0.6;
  double anchor_weight = 10.0;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AdvisorConfig&) const = default;
};

/// Linear ramp over the first warmup_fraction of total_steps, then 1.
double anchor_target(int step, int total_steps, double warmup_fraction);

struct CurriculumSignal {
  double eta = 0.5;
  double lambda_adaptive = 0.0;
  double entropy_term = 0.0;
  double f_low = 0.0;
  int step = 0;
};

/// What the training loop reports back after a classifier step.
struct AdvisorFeedback {
  /// The non-negative term eta multiplies in the integrated loss.
  double adversarial_term = 0.0;
  double eta_target = 0.0;
};

/// P_psi: a tanh MLP from the nine summary statistics to a logit, squashed by
/// a sigmoid into (0, 1).
class CurriculumAdvisor {
 public:
  explicit CurriculumAdvisor(const AdvisorConfig& config);

  const AdvisorConfig& config() const { return config_; }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  double eta(const MISummaryStats& stats) const;

  /// Throws kConfig when any statistic is non-finite.
  CurriculumSignal advise(const MISummaryStats& stats, int step) const;

  /// One Adam step on (eta * adversarial_term + w * (eta - target)^2) / (1 + w)
  /// evaluated at `stats`. Returns the loss. On gradient norm above 1e3 the
  /// advisor switches to the anchor schedule and kDivergence is thrown.
  double update(const MISummaryStats& stats, const AdvisorFeedback& feedback);

  bool fallen_back() const { return fallen_back_; }

 private:
  double logit(const MISummaryStats& stats, DenseStack::Cache* cache) const;

  AdvisorConfig config_;
  DenseStack stack_;
  Eigen::VectorXd params_;
  Adam optimizer_;
  bool fallen_back_ = false;
};

}  // namespace pcr
