#include "pcrobust/mi_estimation.hpp"

#include "pcrobust/error.hpp"

#include <atomic>
#include <cmath>

namespace pcr {

namespace {

std::atomic<std::uint64_t> g_estimator_calls{0};

std::vector<int> stack_widths(int in, const std::vector<int>& hidden) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(1);
  return w;
}

Eigen::MatrixXd concat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -INFINITY) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

StatisticNetwork::StatisticNetwork(int input_dim, int logit_dim, std::vector<int> hidden,
                                   std::uint64_t seed)
    : input_dim_(input_dim),
      logit_dim_(logit_dim),
      stack_(stack_widths(input_dim + logit_dim, hidden), Activation::kRelu, false) {
  params_ = Eigen::VectorXd::Zero(stack_.param_count());
  Rng rng(seed);
  stack_.init(params_, rng);
}

Eigen::VectorXd StatisticNetwork::forward(const Eigen::MatrixXd& inputs,
                                          const Eigen::MatrixXd& logits,
                                          DenseStack::Cache* cache) const {
  if (inputs.cols() != input_dim_ || logits.cols() != logit_dim_ ||
      inputs.rows() != logits.rows()) {
    throw Error(ErrorCode::kConfig, "statistic network input shape mismatch");
  }
  return stack_.forward(params_, concat(inputs, logits), cache).col(0);
}

Eigen::VectorXd StatisticNetwork::evaluate(const Eigen::MatrixXd& inputs,
                                           const Eigen::MatrixXd& logits) const {
  return forward(inputs, logits, nullptr);
}

void StatisticNetwork::backward(const DenseStack::Cache& cache, const Eigen::VectorXd& dT,
                                Eigen::VectorXd* dparams, Eigen::MatrixXd* dlogits) const {
  if (dparams && dparams->size() != params_.size()) {
    *dparams = Eigen::VectorXd::Zero(params_.size());
  }
  if (dlogits) {
    Eigen::MatrixXd dinput;
    stack_.backward(params_, cache, dT, dparams, &dinput);
    *dlogits = dinput.rightCols(logit_dim_);
  } else {
    stack_.backward(params_, cache, dT, dparams, nullptr);
  }
}

PairBatch shuffled_pairs(const PairBatch& positives, const std::vector<int>& perm) {
  PairBatch out{positives.inputs, Eigen::MatrixXd(positives.logits.rows(),
                                                  positives.logits.cols())};
  for (Eigen::Index i = 0; i < positives.logits.rows(); ++i) {
    out.logits.row(i) = positives.logits.row(perm[static_cast<std::size_t>(i)]);
  }
  return out;
}

MIBatchEstimate dv_from_values(const Eigen::VectorXd& joint, const Eigen::VectorXd& marginal,
                               MIKind kind) {
  if (joint.size() == 0 || marginal.size() == 0) {
    throw Error(ErrorCode::kConfig, "DV estimate needs non-empty positive and negative sets");
  }
  if (!joint.allFinite() || !marginal.allFinite()) {
    throw Error(ErrorCode::kNumerical,
                "statistic overflow: max statistic value " +
                    std::to_string(std::max(joint.maxCoeff(), marginal.maxCoeff())));
  }
  MIBatchEstimate est;
  est.kind = kind;
  est.per_sample_T = joint;
  est.joint_term = joint.mean();
  est.marginal_term = log_mean_exp(marginal);
  if (!std::isfinite(est.marginal_term)) {
    throw Error(ErrorCode::kNumerical, "marginal term overflow: max statistic value " +
                                           std::to_string(marginal.maxCoeff()));
  }
  est.value = est.joint_term - est.marginal_term;
  return est;
}

MIBatchEstimate dv_estimate(const StatisticNetwork& T, const PairBatch& positives,
                            const PairBatch& negatives, MIKind kind) {
  if (positives.size() == 0 || negatives.size() == 0) {
    throw Error(ErrorCode::kConfig, "DV estimate needs non-empty positive and negative sets");
  }
  return dv_from_values(T.evaluate(positives.inputs, positives.logits),
                        T.evaluate(negatives.inputs, negatives.logits), kind);
}

Eigen::RowVectorXd pooled_embedding(const Points& points) {
  Eigen::RowVectorXd e(6);
  e.head<3>() = points.colwise().mean();
  e.tail<3>() = points.colwise().maxCoeff();
  return e;
}

MineEstimator::MineEstimator(int input_dim, int logit_dim, const MineConfig& config,
                             MIKind kind)
    : config_(config), kind_(kind), net_(input_dim, logit_dim, config.hidden, config.seed) {
  optimizer_.lr = config_.learning_rate;
}

MIBatchEstimate MineEstimator::estimate(const PairBatch& positives,
                                        const PairBatch& negatives) const {
  return dv_estimate(net_, positives, negatives, kind_);
}

MIBatchEstimate MineEstimator::train_step(const PairBatch& positives,
                                          const PairBatch& negatives, const PairBatch* cross) {
  ++g_estimator_calls;
  DenseStack::Cache pos_cache, neg_cache, cross_cache;
  const Eigen::VectorXd t_pos = net_.forward(positives.inputs, positives.logits, &pos_cache);
  const Eigen::VectorXd t_neg = net_.forward(negatives.inputs, negatives.logits, &neg_cache);
  MIBatchEstimate est = dv_from_values(t_pos, t_neg, kind_);
  if (est.value > 20.0) {
    throw Error(ErrorCode::kDivergence,
                "MI estimator diverged: estimate " + std::to_string(est.value) + " nats");
  }

  // Moving average of mean(exp(T_neg)) kept in the log domain, bias-corrected
  // like Adam's first moment.
  const double log_m = est.marginal_term;
  const double d = config_.ema_decay;
  ++ema_steps_;
  ema_ = ema_steps_ == 1 ? std::log(1.0 - d) + log_m
                         : log_add_exp(std::log(d) + ema_, std::log(1.0 - d) + log_m);
  const double log_ema_hat = ema_ - std::log(1.0 - std::pow(d, static_cast<double>(ema_steps_)));

  const double w = cross ? config_.cross_weight : 0.0;
  const auto n_pos = static_cast<double>(t_pos.size());
  const auto n_neg = static_cast<double>(t_neg.size());

  // Gradient of the negated objective (we minimise).
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net_.parameters().size());
  net_.backward(pos_cache, Eigen::VectorXd::Constant(t_pos.size(), -1.0 / n_pos), &grad,
                nullptr);
  const Eigen::VectorXd neg_weights =
      (1.0 - w) * ((t_neg.array() - log_ema_hat).exp() / n_neg).matrix();
  net_.backward(neg_cache, neg_weights, &grad, nullptr);
  if (cross && w != 0.0) {
    net_.forward(cross->inputs, cross->logits, &cross_cache);
    net_.backward(cross_cache,
                  Eigen::VectorXd::Constant(cross->size(), w / static_cast<double>(cross->size())),
                  &grad, nullptr);
  }
  optimizer_.step(net_.parameters(), grad);
  return est;
}

DualEstimators::DualEstimators(int input_dim, int logit_dim, const MineConfig& config)
    : natural(input_dim, logit_dim, config, MIKind::kNatural),
      adversarial(input_dim, logit_dim,
                  [&] {
                    MineConfig c = config;
                    c.seed = mix_seed(config.seed, 1);
                    return c;
                  }(),
                  MIKind::kAdversarial) {}

namespace {

void check_batch(const MIBatch& b) {
  const auto n = b.logits.rows();
  if (n < 2 || b.clean.rows() != n || b.adversarial.rows() != n || b.perturbation.rows() != n) {
    throw Error(ErrorCode::kConfig, "MI batch needs >= 2 aligned rows");
  }
}

}  // namespace

DualEstimators::Estimates DualEstimators::train_step(const MIBatch& batch, Rng& rng) {
  check_batch(batch);
  const auto perm = rng.derangement(static_cast<int>(batch.logits.rows()));
  const PairBatch nat_pos{batch.clean, batch.logits};
  const PairBatch nat_cross{batch.adversarial, batch.logits};
  const PairBatch adv_pos{batch.perturbation, batch.logits};
  const PairBatch adv_cross{Eigen::MatrixXd::Zero(batch.perturbation.rows(),
                                                  batch.perturbation.cols()),
                            batch.logits};
  Estimates out{natural.train_step(nat_pos, shuffled_pairs(nat_pos, perm), &nat_cross),
                adversarial.train_step(adv_pos, shuffled_pairs(adv_pos, perm), &adv_cross)};
  return out;
}

DualEstimators::Estimates DualEstimators::estimate(const MIBatch& batch, Rng& rng) const {
  check_batch(batch);
  const auto perm = rng.derangement(static_cast<int>(batch.logits.rows()));
  const PairBatch nat_pos{batch.clean, batch.logits};
  const PairBatch adv_pos{batch.perturbation, batch.logits};
  return {natural.estimate(nat_pos, shuffled_pairs(nat_pos, perm)),
          adversarial.estimate(adv_pos, shuffled_pairs(adv_pos, perm))};
}

DualEstimators::Estimates train_estimators(DualEstimators& estimators,
                                           const std::function<MIBatch(Rng&)>& stream,
                                           int steps, Rng& rng) {
  if (steps < 1) throw Error(ErrorCode::kConfig, "estimator training needs >= 1 step");
  DualEstimators::Estimates last{};
  for (int s = 0; s < steps; ++s) last = estimators.train_step(stream(rng), rng);
  return last;
}

std::uint64_t estimator_invocations() { return g_estimator_calls.load(); }

MIDecomposition decompose_mi(double total, double natural, double adversarial) {
  return {total, natural, adversarial, total - (natural + adversarial)};
}

Eigen::VectorXd per_sample_mi_proxy(const MIBatchEstimate& estimate) {
  return estimate.per_sample_T.array() - estimate.marginal_term;
}

Eigen::VectorXd MISummaryStats::as_vector() const {
  Eigen::VectorXd v(9);
  v << mean_IN, mean_IA, var_IN, var_IA, skew_IN, skew_IA, f_low, H_IN, H_IA;
  return v;
}

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double ss = 0.0;
  for (double x : values) ss += (x - m) * (x - m);
  return ss / static_cast<double>(values.size() - 1);
}

double sample_skewness(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 3) return 0.0;
  const double m = mean_of(values);
  double m2 = 0.0, m3 = 0.0;
  for (double x : values) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 1e-300) return 0.0;
  const double g1 = m3 / std::pow(m2, 1.5);
  return g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0);
}

double assignment_entropy(std::span<const int> assignments, int num_clusters) {
  if (assignments.empty()) return 0.0;
  std::vector<double> counts(static_cast<std::size_t>(num_clusters), 0.0);
  for (int a : assignments) {
    if (a < 0 || a >= num_clusters) throw Error(ErrorCode::kConfig, "cluster index out of range");
    counts[static_cast<std::size_t>(a)] += 1.0;
  }
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / static_cast<double>(assignments.size());
      h -= p * std::log(p);
    }
  }
  return h;
}

MISummaryStats summarize(std::span<const double> natural, std::span<const double> adversarial,
                         std::span<const int> natural_clusters,
                         std::span<const int> adversarial_clusters, int num_clusters) {
  if (natural.size() < static_cast<std::size_t>(kMinSummaryWindow) ||
      adversarial.size() < static_cast<std::size_t>(kMinSummaryWindow)) {
    throw Error(ErrorCode::kInsufficientData,
                "summary window needs at least " + std::to_string(kMinSummaryWindow) +
                    " samples per stream");
  }
  if (natural_clusters.size() != natural.size() ||
      adversarial_clusters.size() != adversarial.size()) {
    throw Error(ErrorCode::kConfig, "cluster assignments must align with the window");
  }
  MISummaryStats s;
  s.mean_IN = mean_of(natural);
  s.mean_IA = mean_of(adversarial);
  s.var_IN = sample_variance(natural);
  s.var_IA = sample_variance(adversarial);
  s.skew_IN = sample_skewness(natural);
  s.skew_IA = sample_skewness(adversarial);
  int low = 0;
  for (int a : adversarial_clusters) low += a == 0 ? 1 : 0;
  s.f_low = static_cast<double>(low) / static_cast<double>(adversarial_clusters.size());
  s.H_IN = assignment_entropy(natural_clusters, num_clusters);
  s.H_IA = assignment_entropy(adversarial_clusters, num_clusters);
  return s;
}

}  // namespace pcr
