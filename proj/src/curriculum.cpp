#include "pcrobust/curriculum.hpp"

#include "pcrobust/error.hpp"
#include "pcrobust/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pcr {

namespace {

struct KMeansRun {
  std::array<double, kNumMIClusters> centroids{};
  std::vector<int> assignments;
  double inertia = std::numeric_limits<double>::infinity();
};

int nearest(const std::array<double, kNumMIClusters>& c, double x) {
  int best = 0;
  for (int j = 1; j < kNumMIClusters; ++j) {
    if (std::abs(x - c[j]) < std::abs(x - c[best])) best = j;
  }
  return best;
}

KMeansRun kmeans_once(std::span<const double> v, Rng& rng) {
  const std::size_t n = v.size();
  KMeansRun run;
  // k-means++ seeding.
  run.centroids[0] = v[rng.index(n)];
  std::vector<double> d2(n);
  for (int j = 1; j < kNumMIClusters; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = INFINITY;
      for (int c = 0; c < j; ++c) best = std::min(best, (v[i] - run.centroids[c]) * (v[i] - run.centroids[c]));
      d2[i] = best;
      total += best;
    }
    double r = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      r -= d2[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    // Rounding can leave r >= 0 at the end; fall back to the farthest point.
    if (d2[pick] <= 0.0) pick = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    run.centroids[j] = v[pick];
  }

  run.assignments.assign(n, 0);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest(run.centroids, v[i]);
      if (a != run.assignments[i]) changed = true;
      run.assignments[i] = a;
    }
    std::array<double, kNumMIClusters> sum{};
    std::array<int, kNumMIClusters> count{};
    for (std::size_t i = 0; i < n; ++i) {
      sum[run.assignments[i]] += v[i];
      ++count[run.assignments[i]];
    }
    for (int j = 0; j < kNumMIClusters; ++j) {
      if (count[j] > 0) {
        run.centroids[j] = sum[j] / count[j];
      } else {
        // Re-seed an empty cluster on the worst-served point.
        std::size_t worst = 0;
        double worst_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = std::abs(v[i] - run.centroids[run.assignments[i]]);
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        run.centroids[j] = v[worst];
        changed = true;
      }
    }
    if (!changed) break;
  }
  run.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - run.centroids[run.assignments[i]];
    run.inertia += d * d;
  }
  return run;
}

}  // namespace

MIClusters fit_clusters(std::span<const double> values, std::uint64_t seed, int restarts) {
  std::vector<double> distinct(values.begin(), values.end());
  for (double x : distinct) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kConfig, "non-finite MI value");
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < static_cast<std::size_t>(kNumMIClusters)) {
    throw Error(ErrorCode::kDegenerate, "k-means needs at least 3 distinct values, got " +
                                            std::to_string(distinct.size()));
  }
  Rng rng(seed);
  KMeansRun best;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    KMeansRun run = kmeans_once(values, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }

  std::array<int, kNumMIClusters> order{0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return best.centroids[a] < best.centroids[b]; });
  std::array<int, kNumMIClusters> relabel{};
  MIClusters out;
  for (int j = 0; j < kNumMIClusters; ++j) {
    relabel[order[j]] = j;
    out.centroids[j] = best.centroids[order[j]];
  }
  for (int j = 1; j < kNumMIClusters; ++j) {
    if (!(out.centroids[j] > out.centroids[j - 1])) {
      throw Error(ErrorCode::kDegenerate, "k-means produced coincident centroids");
    }
  }
  out.assignments.resize(values.size());
  std::array<double, kNumMIClusters> counts{};
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.assignments[i] = relabel[best.assignments[i]];
    counts[out.assignments[i]] += 1.0;
  }
  for (int j = 0; j < kNumMIClusters; ++j) {
    out.frequencies[j] = counts[j] / static_cast<double>(values.size());
  }
  return out;
}

double entropy_of(std::span<const double> frequencies) {
  double h = 0.0;
  for (double p : frequencies) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double entropy_regularizer(const MIClusters& clusters) {
  return entropy_of(clusters.frequencies);
}

double adaptive_lambda(double f_low, double entropy, double alpha, double beta) {
  return alpha * (1.0 - f_low) * std::exp(-beta * entropy);
}

void AdvisorConfig::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorCode::kConfig, "alpha must be > 0");
  if (!(beta >= 0.0)) throw Error(ErrorCode::kConfig, "beta must be >= 0");
  if (window < kMinSummaryWindow) throw Error(ErrorCode::kConfig, "window must be >= 30");
  if (advisor_widths.empty()) throw Error(ErrorCode::kConfig, "advisor_widths is empty");
  for (int w : advisor_widths) {
    if (w <= 0) throw Error(ErrorCode::kConfig, "advisor widths must be positive");
  }
  if (!(anchor_warmup_fraction > 0.0 && anchor_warmup_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfig, "anchor_warmup_fraction must be in (0, 1]");
  }
  if (!(anchor_weight >= 0.0)) throw Error(ErrorCode::kConfig, "anchor_weight must be >= 0");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kConfig, "learning_rate must be >= 0");
}

double anchor_target(int step, int total_steps, double warmup_fraction) {
  const double ramp = warmup_fraction * std::max(1, total_steps);
  return std::clamp(static_cast<double>(step) / ramp, 0.0, 1.0);
}

namespace {

std::vector<int> advisor_shape(const AdvisorConfig& c) {
  std::vector<int> w{9};
  w.insert(w.end(), c.advisor_widths.begin(), c.advisor_widths.end());
  w.push_back(1);
  return w;
}

Eigen::MatrixXd advisor_input(const MISummaryStats& stats) {
  const Eigen::VectorXd v = stats.as_vector();
  if (!v.allFinite()) {
    throw Error(ErrorCode::kConfig, "advisor received non-finite summary statistics");
  }
  // Skewness and variance are unbounded; clip so one outlier window cannot
  // saturate the tanh layers.
  return v.cwiseMax(-10.0).cwiseMin(10.0).transpose();
}

}  // namespace

CurriculumAdvisor::CurriculumAdvisor(const AdvisorConfig& config)
    : config_(config), stack_(advisor_shape(config), Activation::kTanh, false) {
  config_.validate();
  params_ = Eigen::VectorXd::Zero(stack_.param_count());
  Rng rng(config_.seed);
  stack_.init(params_, rng);
  // Zeroed output layer: a fresh advisor emits sigmoid(0) = 0.5.
  const int last = stack_.num_layers() - 1;
  stack_.weight(params_, last).setZero();
  stack_.bias(params_, last).setZero();
  optimizer_.lr = config_.learning_rate;
}

double CurriculumAdvisor::logit(const MISummaryStats& stats, DenseStack::Cache* cache) const {
  return stack_.forward(params_, advisor_input(stats), cache)(0, 0);
}

double CurriculumAdvisor::eta(const MISummaryStats& stats) const {
  return sigmoid(logit(stats, nullptr));
}

CurriculumSignal CurriculumAdvisor::advise(const MISummaryStats& stats, int step) const {
  CurriculumSignal s;
  s.eta = eta(stats);
  s.f_low = stats.f_low;
  s.entropy_term = stats.H_IA;
  s.lambda_adaptive = adaptive_lambda(stats.f_low, stats.H_IA, config_.alpha, config_.beta);
  s.step = step;
  return s;
}

double CurriculumAdvisor::update(const MISummaryStats& stats, const AdvisorFeedback& feedback) {
  DenseStack::Cache cache;
  const double z = logit(stats, &cache);
  const double eta = sigmoid(z);
  const double w = config_.anchor_weight;
  const double gap = eta - feedback.eta_target;
  const double loss = (eta * feedback.adversarial_term + w * gap * gap) / (1.0 + w);
  const double dloss_deta = (feedback.adversarial_term + 2.0 * w * gap) / (1.0 + w);
  const double dz = dloss_deta * eta * (1.0 - eta);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  stack_.backward(params_, cache, Eigen::MatrixXd::Constant(1, 1, dz), &grad, nullptr);
  const double norm = grad.norm();
  if (!std::isfinite(norm) || norm > 1e3) {
    fallen_back_ = true;
    throw Error(ErrorCode::kDivergence,
                "advisor gradient norm " + std::to_string(norm) + " exceeds 1e3");
  }
  optimizer_.step(params_, grad);
  return loss;
}

}  // namespace pcr
