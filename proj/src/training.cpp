#include "pcrobust/training.hpp"

#include "pcrobust/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

namespace pcr {

namespace {
constexpr double kEtaFloor = 1e-3;
}

TrainingArm TrainingArm::make(ArmKind kind) {
  switch (kind) {
    case ArmKind::kBaseline: return {kind, false, false, false};
    case ArmKind::kAt: return {kind, true, false, false};
    case ArmKind::kAtMine: return {kind, true, true, false};
    case ArmKind::kAtMineCt: return {kind, true, true, true};
  }
  throw Error(ErrorCode::kConfig, "unknown arm");
}

TrainingArm TrainingArm::parse(const std::string& name) {
  if (name == "baseline") return make(ArmKind::kBaseline);
  if (name == "at") return make(ArmKind::kAt);
  if (name == "at_mine") return make(ArmKind::kAtMine);
  if (name == "at_mine_ct") return make(ArmKind::kAtMineCt);
  throw Error(ErrorCode::kConfig, "unknown training arm '" + name + "'");
}

const char* TrainingArm::name() const {
  switch (kind) {
    case ArmKind::kBaseline: return "baseline";
    case ArmKind::kAt: return "at";
    case ArmKind::kAtMine: return "at_mine";
    case ArmKind::kAtMineCt: return "at_mine_ct";
  }
  return "unknown";
}

void TrainingConfig::validate() const {
  if (steps < 1) throw Error(ErrorCode::kConfig, "steps must be >= 1");
  if (batch_size < 2) throw Error(ErrorCode::kConfig, "batch_size must be >= 2");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kConfig, "learning_rate must be >= 0");
  if (!(mi_lambda >= 0.0)) throw Error(ErrorCode::kConfig, "mi_lambda must be >= 0");
  if (probe_every < 1) throw Error(ErrorCode::kConfig, "probe_every must be >= 1");
  if (!(probe_fraction > 0.0 && probe_fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "probe_fraction must be in (0, 1)");
  }
  if (mine_warmup_steps < 0 || mine_steps_early < 1 || mine_steps_late < 1) {
    throw Error(ErrorCode::kConfig, "estimator step counts must be positive");
  }
  if (!is_shifting(train_attack.kind)) {
    throw Error(ErrorCode::kConfig, "train_attack must be a shifting attack");
  }
  train_attack.validate();
  probe_attack.validate();
  advisor.validate();
}

double reconstruct_total(const StepRecord& rec, const TrainingArm& arm, double mi_lambda) {
  double total = rec.clean_loss;
  if (arm.use_adversarial) {
    double inner = rec.adv_loss;
    if (arm.use_mi_term) inner += mi_lambda * rec.mi_term;
    total += rec.eta * inner;
  }
  if (arm.use_curriculum) total += rec.lambda_adaptive * rec.f_low;
  return total;
}

namespace {

Eigen::MatrixXd pooled_rows(std::span<const PerturbationRecord> recs, bool perturbation) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(recs.size()), 6);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        pooled_embedding(perturbation ? recs[i].rho : recs[i].perturbed.points);
  }
  return out;
}

std::vector<PerturbationRecord> craft(const Classifier& model, std::span<const PointCloud> batch,
                                      const AttackConfig& attack, std::uint64_t seed) {
  std::vector<PerturbationRecord> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    AttackConfig cfg = attack;
    cfg.seed = mix_seed(seed, i);
    out.push_back(run_attack(model, batch[i], cfg));
  }
  return out;
}

}  // namespace

LossBreakdown integrated_loss(const Classifier& model, std::span<const PointCloud> batch,
                              std::span<const PerturbationRecord> adversarial,
                              const StatisticNetwork* adversarial_T,
                              const CurriculumSignal& signal, const TrainingArm& arm,
                              double mi_lambda, Rng& rng, bool want_grad) {
  if (batch.empty()) throw Error(ErrorCode::kConfig, "integrated loss needs a non-empty batch");
  if (arm.use_mi_term && adversarial_T == nullptr) {
    throw Error(ErrorCode::kConfig, "arm uses the MI term but no adversarial estimator was given");
  }
  if (arm.use_adversarial && adversarial.size() != batch.size()) {
    throw Error(ErrorCode::kConfig, "adversarial arm needs one record per batch cloud");
  }
  const auto n = static_cast<double>(batch.size());
  LossBreakdown out;
  if (want_grad) out.grad = Eigen::VectorXd::Zero(model.parameters().size());

  Classifier::Cache cache;
  Eigen::VectorXd dlogits;
  for (const auto& cloud : batch) {
    const Eigen::VectorXd logits = model.forward(cloud.points, want_grad ? &cache : nullptr);
    out.clean_loss += cross_entropy(logits, cloud.label, want_grad ? &dlogits : nullptr) / n;
    if (want_grad) model.backward(cache, dlogits / n, &out.grad, nullptr);
  }
  out.total = out.clean_loss;

  if (arm.use_adversarial) {
    const double eta = signal.eta;
    const auto b = static_cast<Eigen::Index>(batch.size());
    std::vector<Classifier::Cache> caches(batch.size());
    Eigen::MatrixXd logits(b, model.num_classes());
    Eigen::MatrixXd dlogit_rows = Eigen::MatrixXd::Zero(b, model.num_classes());
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto& rec = adversarial[static_cast<std::size_t>(i)];
      const Eigen::VectorXd z = model.forward(rec.perturbed.points, want_grad ? &caches[static_cast<std::size_t>(i)] : nullptr);
      logits.row(i) = z.transpose();
      Eigen::VectorXd d;
      out.adv_loss += cross_entropy(z, rec.perturbed.label, &d) / n;
      dlogit_rows.row(i) = eta * d.transpose() / n;
    }
    double inner = out.adv_loss;

    if (arm.use_mi_term) {
      const auto perm = rng.derangement(static_cast<int>(b));
      const PairBatch pos{pooled_rows(adversarial, true), logits};
      const PairBatch neg = shuffled_pairs(pos, perm);
      DenseStack::Cache pos_cache, neg_cache;
      const Eigen::VectorXd t_pos = adversarial_T->forward(pos.inputs, pos.logits, &pos_cache);
      const Eigen::VectorXd t_neg = adversarial_T->forward(neg.inputs, neg.logits, &neg_cache);
      auto est = dv_from_values(t_pos, t_neg, MIKind::kAdversarial);
      // MI is non-negative; a negative DV value is estimator error that the
      // classifier could otherwise exploit without bound.
      out.mi_term = std::max(0.0, est.value);
      inner += mi_lambda * out.mi_term;
      if (want_grad && est.value > 0.0) {
        // d(DV)/d(logits): 1/n on positives, -softmax(T_neg) on negatives,
        // routed back to the logit row each negative borrowed.
        const Eigen::VectorXd soft = softmax(t_neg);
        Eigen::MatrixXd dpos, dneg;
        adversarial_T->backward(pos_cache, Eigen::VectorXd::Constant(b, 1.0 / static_cast<double>(b)),
                                nullptr, &dpos);
        adversarial_T->backward(neg_cache, -soft, nullptr, &dneg);
        const double scale = eta * mi_lambda;
        dlogit_rows += scale * dpos;
        for (Eigen::Index j = 0; j < b; ++j) {
          dlogit_rows.row(perm[static_cast<std::size_t>(j)]) += scale * dneg.row(j);
        }
      }
      out.adversarial_estimate = std::move(est);
    }
    if (want_grad) {
      for (Eigen::Index i = 0; i < b; ++i) {
        model.backward(caches[static_cast<std::size_t>(i)], dlogit_rows.row(i).transpose(),
                       &out.grad, nullptr);
      }
    }
    out.total += eta * inner;
  }

  if (arm.use_curriculum) {
    out.regularizer = signal.lambda_adaptive * signal.f_low;
    out.total += out.regularizer;
  }
  return out;
}

LossBreakdown integrated_loss(const Classifier& model, std::span<const PointCloud> batch,
                              const AttackConfig& attack, const StatisticNetwork* adversarial_T,
                              const CurriculumSignal& signal, const TrainingArm& arm,
                              double mi_lambda, Rng& rng, bool want_grad) {
  std::vector<PerturbationRecord> adversarial;
  if (arm.use_adversarial) adversarial = craft(model, batch, attack, rng.bits());
  return integrated_loss(model, batch, adversarial, adversarial_T, signal, arm, mi_lambda, rng,
                         want_grad);
}

DatasetSplit split_dataset(const std::vector<PointCloud>& clouds, double probe_fraction,
                           std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < clouds.size(); ++i) by_label[clouds[i].label].push_back(i);
  Rng rng(seed);
  std::vector<bool> is_probe(clouds.size(), false);
  for (auto& [label, idx] : by_label) {
    rng.shuffle(idx);
    const auto take = static_cast<std::size_t>(std::llround(probe_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < take && k < idx.size(); ++k) is_probe[idx[k]] = true;
  }
  DatasetSplit out;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    (is_probe[i] ? out.probe : out.train).push_back(clouds[i]);
  }
  return out;
}

namespace {

double adversarial_accuracy(const Classifier& model, std::span<const PointCloud> clouds,
                            const AttackConfig& attack, std::uint64_t seed) {
  if (clouds.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    AttackConfig cfg = attack;
    cfg.seed = mix_seed(seed, i);
    const auto rec = run_attack(model, clouds[i], cfg);
    hits += model.predict(rec.perturbed.points) == clouds[i].label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(clouds.size());
}

/// Sliding windows of per-sample MI proxies plus the statistics derived from
/// them.
class MIWindow {
 public:
  explicit MIWindow(std::size_t capacity) : capacity_(capacity) {}

  void push(const Eigen::VectorXd& natural, const Eigen::VectorXd& adversarial) {
    for (double v : natural) push_one(natural_, v);
    for (double v : adversarial) push_one(adversarial_, v);
  }

  bool full() const {
    return natural_.size() >= capacity_ && adversarial_.size() >= capacity_;
  }

  /// Empty optional when either stream is too degenerate to cluster.
  std::optional<MISummaryStats> stats(std::uint64_t seed) const {
    const std::vector<double> nat(natural_.begin(), natural_.end());
    const std::vector<double> adv(adversarial_.begin(), adversarial_.end());
    try {
      const auto nat_clusters = fit_clusters(nat, mix_seed(seed, 1));
      const auto adv_clusters = fit_clusters(adv, mix_seed(seed, 2));
      return summarize(nat, adv, nat_clusters.assignments, adv_clusters.assignments);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerate) return std::nullopt;
      throw;
    }
  }

 private:
  void push_one(std::deque<double>& q, double v) {
    q.push_back(v);
    while (q.size() > capacity_) q.pop_front();
  }

  std::size_t capacity_;
  std::deque<double> natural_;
  std::deque<double> adversarial_;
};

}  // namespace

RunResult run_arm(const DatasetSplit& data, const TrainingArm& arm,
                  const TrainingConfig& config, const ClassifierConfig& classifier,
                  const StepSink& sink) {
  config.validate();
  if (data.train.size() < static_cast<std::size_t>(config.batch_size)) {
    throw Error(ErrorCode::kInsufficientData, "training split smaller than one batch");
  }
  ClassifierConfig cc = classifier;
  cc.seed = mix_seed(classifier.seed, config.seed);
  RunResult result{{}, Classifier(cc), std::nullopt};
  Classifier& model = result.model;
  Adam optimizer;
  optimizer.lr = config.learning_rate;

  Rng rng(mix_seed(config.seed, 0x7261));
  if (arm.use_mi_term) {
    MineConfig mc = config.mine;
    mc.seed = mix_seed(config.mine.seed, config.seed);
    result.estimators.emplace(6, model.num_classes(), mc);
  }
  std::optional<CurriculumAdvisor> advisor;
  if (arm.use_curriculum) {
    AdvisorConfig ac = config.advisor;
    ac.seed = mix_seed(config.advisor.seed, config.seed);
    advisor.emplace(ac);
  }
  MIWindow window(static_cast<std::size_t>(config.advisor.window));
  std::optional<MISummaryStats> stats;

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t cursor = 0;

  std::vector<PointCloud> batch(static_cast<std::size_t>(config.batch_size));
  for (int t = 0; t < config.steps; ++t) {
    StepRecord rec;
    rec.step = t;
    try {
      for (auto& slot : batch) {
        if (cursor == order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        slot = data.train[order[cursor++]];
      }

      CurriculumSignal signal;
      signal.step = t;
      signal.eta = arm.use_adversarial ? 1.0 : 0.0;
      std::optional<MISummaryStats> stats_used;
      if (advisor) {
        const double target = anchor_target(t, config.steps, config.advisor.anchor_warmup_fraction);
        if (stats && !advisor->fallen_back()) {
          signal = advisor->advise(*stats, t);
          stats_used = stats;
          rec.advisor_active = true;
        } else {
          // Schedule stand-in until the first window fills (or after a
          // fallback), kept inside the open unit interval like the advisor.
          signal.eta = std::clamp(target, kEtaFloor, 1.0 - kEtaFloor);
          if (stats) {
            signal.f_low = stats->f_low;
            signal.entropy_term = stats->H_IA;
            signal.lambda_adaptive = adaptive_lambda(stats->f_low, stats->H_IA,
                                                     config.advisor.alpha, config.advisor.beta);
          }
        }
      }

      std::vector<PerturbationRecord> adversarial;
      if (arm.use_adversarial) {
        adversarial = craft(model, batch, config.train_attack, mix_seed(config.seed, static_cast<std::uint64_t>(t) + 17));
        result.attack_calls += adversarial.size();
      }

      if (arm.use_mi_term) {
        MIBatch mb;
        const std::span<const PerturbationRecord> recs(adversarial);
        mb.perturbation = pooled_rows(recs, true);
        mb.adversarial = pooled_rows(recs, false);
        mb.clean.resize(static_cast<Eigen::Index>(batch.size()), 6);
        mb.logits.resize(static_cast<Eigen::Index>(batch.size()), model.num_classes());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          mb.clean.row(static_cast<Eigen::Index>(i)) = pooled_embedding(batch[i].points);
          mb.logits.row(static_cast<Eigen::Index>(i)) = model.forward(adversarial[i].perturbed.points).transpose();
        }
        const int updates = t < config.mine_warmup_steps ? config.mine_steps_early : config.mine_steps_late;
        for (int u = 0; u < updates; ++u) result.estimators->train_step(mb, rng);
        result.estimator_calls += static_cast<std::uint64_t>(updates);
        const auto est = result.estimators->estimate(mb, rng);
        const Eigen::VectorXd nat = per_sample_mi_proxy(est.natural);
        const Eigen::VectorXd adv = per_sample_mi_proxy(est.adversarial);
        rec.mi_natural.assign(nat.begin(), nat.end());
        rec.mi_adversarial.assign(adv.begin(), adv.end());
        window.push(nat, adv);
      }

      const StatisticNetwork* t_a =
          result.estimators ? &result.estimators->adversarial.network() : nullptr;
      LossBreakdown loss = integrated_loss(model, batch, adversarial, t_a, signal, arm,
                                           config.mi_lambda, rng, true);
      if (!std::isfinite(loss.total) || loss.total > 1e6) {
        throw Error(ErrorCode::kDivergence, "integrated loss diverged: " + std::to_string(loss.total));
      }
      optimizer.step(model.parameters(), loss.grad);

      rec.clean_loss = loss.clean_loss;
      rec.adv_loss = loss.adv_loss;
      rec.mi_term = loss.mi_term;
      rec.eta = signal.eta;
      rec.lambda_adaptive = arm.use_curriculum ? signal.lambda_adaptive : 0.0;
      rec.entropy_term = signal.entropy_term;
      rec.f_low = signal.f_low;
      rec.total = loss.total;

      if (advisor) {
        if (window.full()) {
          if (auto fresh = window.stats(mix_seed(config.seed, static_cast<std::uint64_t>(t)))) {
            stats = fresh;
          }
        }
        if (stats_used && !advisor->fallen_back()) {
          AdvisorFeedback fb;
          fb.adversarial_term = std::max(0.0, loss.adv_loss + config.mi_lambda * loss.mi_term);
          fb.eta_target = anchor_target(t, config.steps, config.advisor.anchor_warmup_fraction);
          try {
            advisor->update(*stats_used, fb);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kDivergence) throw;
          }
        }
      }

      const bool last = t + 1 == config.steps;
      if (t % config.probe_every == 0 || last) {
        rec.clean_acc = accuracy(model, data.probe);
        rec.adv_acc = adversarial_accuracy(model, data.probe, config.probe_attack,
                                           mix_seed(config.seed, 0xbeef));
        if (last) {
          result.final_clean_acc = *rec.clean_acc;
          result.final_adv_acc = *rec.adv_acc;
        }
      }
    } catch (const Error& e) {
      throw Error(e.code(), std::string(arm.name()) + " step " + std::to_string(t) + ": " + e.what());
    }
    if (sink) sink(rec);
    result.log.push_back(std::move(rec));
  }
  return result;
}

PinskerReport pinsker_check(const Classifier& model, const AttackConfig& attack,
                            std::span<const PointCloud> probe, const StatisticNetwork& adversarial_T,
                            std::uint64_t seed) {
  if (probe.size() < 200) {
    throw Error(ErrorCode::kInsufficientData,
                "bound check needs >= 200 probe clouds, got " + std::to_string(probe.size()));
  }
  const auto n = static_cast<Eigen::Index>(probe.size());
  int clean_wrong = 0, adv_wrong = 0;
  Eigen::MatrixXd rho_rows(n, 6), logits(n, model.num_classes());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& cloud = probe[static_cast<std::size_t>(i)];
    AttackConfig cfg = attack;
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    const auto rec = run_attack(model, cloud, cfg);
    clean_wrong += model.predict(cloud.points) != cloud.label ? 1 : 0;
    const Eigen::VectorXd z = model.forward(rec.perturbed.points);
    Eigen::Index arg = 0;
    z.maxCoeff(&arg);
    adv_wrong += static_cast<int>(arg) != cloud.label ? 1 : 0;
    logits.row(i) = z.transpose();
    rho_rows.row(i) = pooled_embedding(rec.rho.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; }));
  }
  Rng rng(seed);
  const PairBatch pos{rho_rows, logits};
  const auto est = dv_estimate(adversarial_T, pos, shuffled_pairs(pos, rng.derangement(static_cast<int>(n))));

  PinskerReport r;
  r.samples = static_cast<int>(n);
  r.clean_error = static_cast<double>(clean_wrong) / static_cast<double>(n);
  r.adversarial_error = static_cast<double>(adv_wrong) / static_cast<double>(n);
  r.delta_pe = std::abs(r.adversarial_error - r.clean_error);
  r.mi = est.value;
  r.mean_tv = std::numeric_limits<double>::quiet_NaN();
  r.bound = std::sqrt(std::max(0.0, r.mi) / 2.0);
  r.eps_stat = 1.96 * std::sqrt((r.adversarial_error * (1.0 - r.adversarial_error) +
                                 r.clean_error * (1.0 - r.clean_error)) /
                                static_cast<double>(n));
  r.holds = r.delta_pe <= r.bound + r.eps_stat;
  return r;
}

PinskerReport pinsker_xor_channel(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kConfig, "p must be in [0, 1]");
  // Fixed y = 0, so y' = rho. P(y' | rho) is a point mass; P(y') = (1-p, p).
  const std::array<double, 2> p_rho{1.0 - p, p};
  const std::array<double, 2> p_out{1.0 - p, p};
  double mi = 0.0, mean_tv = 0.0;
  for (int r = 0; r < 2; ++r) {
    if (p_rho[r] == 0.0) continue;
    double kl = 0.0, tv = 0.0;
    for (int y = 0; y < 2; ++y) {
      const double cond = (y == r) ? 1.0 : 0.0;
      if (cond > 0.0) kl += cond * std::log(cond / p_out[y]);
      tv += std::abs(cond - p_out[y]);
    }
    mi += p_rho[r] * kl;
    mean_tv += p_rho[r] * 0.5 * tv;
  }
  PinskerReport rep;
  rep.clean_error = 0.0;
  rep.adversarial_error = p;  // y' != y exactly when rho = 1
  rep.delta_pe = std::abs(rep.adversarial_error - rep.clean_error);
  rep.mi = mi;
  rep.mean_tv = mean_tv;
  rep.bound = std::sqrt(mi / 2.0);
  rep.eps_stat = 0.0;
  rep.holds = rep.delta_pe <= rep.bound;
  return rep;
}

ForgettingReport forgetting_metrics(std::span<const double> curve) {
  ForgettingReport r;
  if (curve.empty()) return r;
  double peak = curve.front();
  for (double a : curve) {
    peak = std::max(peak, a);
    r.max_drawdown = std::max(r.max_drawdown, peak - a);
  }
  r.peak = peak;
  r.final_gap = peak - curve.back();
  return r;
}

ForgettingReport forgetting_metrics(const std::vector<StepRecord>& log) {
  std::vector<double> curve;
  for (const auto& rec : log) {
    if (rec.clean_acc) curve.push_back(*rec.clean_acc);
  }
  return forgetting_metrics(curve);
}

}  // namespace pcr
