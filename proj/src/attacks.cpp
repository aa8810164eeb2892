#include "pcrobust/attacks.hpp"

#include "pcrobust/error.hpp"
#include "pcrobust/json_io.hpp"
#include "pcrobust/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>

namespace pcr {

namespace {

std::atomic<std::uint64_t> g_attack_calls{0};

struct KindName {
  AttackKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {AttackKind::kAdd, "add"},         {AttackKind::kDrop, "drop"},
    {AttackKind::kIfgm, "ifgm"},       {AttackKind::kPgd, "pgd"},
    {AttackKind::kPerturb, "perturb"}, {AttackKind::kKnn, "knn"},
    {AttackKind::kSia, "sia"},
};

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

void clamp_box(Points& rho, double eps) { rho = rho.cwiseMax(-eps).cwiseMin(eps); }

void zero_unmasked(Points& m, const std::vector<bool>& mask) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) m.row(i).setZero();
  }
}

/// Fills perturbed, rho (recomputed as perturbed - original so the identity
/// holds bit-for-bit), budget and success for a shifting attack.
PerturbationRecord finish_shift(const Classifier& model, const PointCloud& cloud,
                                const Points& rho, AttackKind kind) {
  PerturbationRecord rec;
  rec.kind = kind;
  rec.original = cloud;
  rec.perturbed.label = cloud.label;
  rec.perturbed.points = cloud.points + rho;
  rec.rho = rec.perturbed.points - cloud.points;
  rec.budget_used.max_norm = rec.rho.cwiseAbs().maxCoeff();
  rec.budget_used.mean_norm = rec.rho.rowwise().norm().mean();
  rec.success = model.predict(rec.perturbed.points) != model.predict(cloud.points);
  return rec;
}

void check_common(const PointCloud& cloud, const AttackConfig& cfg, AttackKind expected) {
  if (cfg.kind != expected) {
    throw Error(ErrorCode::kConfig, std::string("attack config kind is '") +
                                        attack_kind_name(cfg.kind) + "', expected '" +
                                        attack_kind_name(expected) + "'");
  }
  cfg.validate();
  validate_cloud(cloud, false);
  ++g_attack_calls;
}

std::vector<int> ranking(const Eigen::VectorXd& scores) {
  std::vector<int> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores(a) > scores(b); });
  return idx;
}

/// Nearest-other-point index for every row (brute force).
std::vector<std::vector<int>> knn_indices(const Points& p, int k) {
  const auto n = p.rows();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> d(static_cast<std::size_t>(n));
  const int kk = static_cast<int>(std::min<Eigen::Index>(k, n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      d[static_cast<std::size_t>(j)] = {j == i ? INFINITY : (p.row(i) - p.row(j)).squaredNorm(),
                                        static_cast<int>(j)};
    }
    std::partial_sort(d.begin(), d.begin() + kk, d.end());
    auto& row = out[static_cast<std::size_t>(i)];
    for (int q = 0; q < kk; ++q) row.push_back(d[static_cast<std::size_t>(q)].second);
  }
  return out;
}

/// Nearest distance and index from `q` to rows of `ref`.
std::pair<double, Eigen::Index> nearest_in(const Eigen::RowVector3d& q, const Points& ref) {
  Eigen::Index arg = 0;
  const double d2 = (ref.rowwise() - q).rowwise().squaredNorm().minCoeff(&arg);
  return {std::sqrt(d2), arg};
}

double knn_value_and_grad(const Points& p, int k, Points* grad) {
  const auto nbrs = knn_indices(p, k);
  const auto n = p.rows();
  double total = 0.0;
  int count = 0;
  if (grad) *grad = Points::Zero(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j : nbrs[static_cast<std::size_t>(i)]) {
      const Eigen::RowVector3d diff = p.row(i) - p.row(j);
      const double d = diff.norm();
      total += d;
      ++count;
      if (grad && d > 0.0) {
        grad->row(i) += diff / d;
        grad->row(j) -= diff / d;
      }
    }
  }
  if (count == 0) return 0.0;
  if (grad) *grad /= static_cast<double>(count);
  return total / static_cast<double>(count);
}

/// Largest row norm, used to turn a gradient into a displacement of at most
/// one step size per point.
double max_row_norm(const Points& g) {
  return g.rows() == 0 ? 0.0 : g.rowwise().norm().maxCoeff();
}

/// Group soft-threshold: the proximal map of t * sum ||rho_i||.
void shrink_rows(Points& v, double t, const std::vector<bool>& mask) {
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double norm = v.row(i).norm();
    v.row(i) *= norm > t ? (1.0 - t / norm) : 0.0;
  }
}

enum class Penalty { kL2, kKnn, kL2Tangent };

/// Proximal-gradient descent with backtracking on
///   -CE(X + rho) + lambda * penalty(rho)
/// over the masked rows, kept inside the epsilon box.
PerturbationRecord penalized_descent(const Classifier& model, const PointCloud& cloud,
                                     const AttackConfig& cfg, Penalty penalty, int* skips) {
  const auto& x = cloud.points;
  const auto mask = saliency_mask(saliency_scores(model, cloud), cfg.saliency_quantile);
  const double lambda = cfg.lambda_tradeoff;
  const int k = std::max(1, cfg.k_points);
  const double knn_clean = penalty == Penalty::kKnn ? knn_regularizer(x, k) : 0.0;

  Points normals;
  if (penalty == Penalty::kL2Tangent) {
    normals = estimate_normals(x, 8);
    int n_skip = 0;
    for (Eigen::Index i = 0; i < normals.rows(); ++i) {
      if (mask[static_cast<std::size_t>(i)] && !normals.row(i).allFinite()) ++n_skip;
    }
    if (skips) *skips = n_skip;
  }

  auto penalty_value = [&](const Points& rho) {
    if (penalty == Penalty::kKnn) return std::abs(knn_regularizer(x + rho, k) - knn_clean);
    return rho.rowwise().norm().sum();
  };
  auto objective = [&](const Points& rho) {
    return -model.loss(x + rho, cloud.label) + lambda * penalty_value(rho);
  };
  auto project = [&](Points& rho) {
    zero_unmasked(rho, mask);
    clamp_box(rho, cfg.epsilon);
    if (penalty == Penalty::kL2Tangent) {
      rho = project_tangent(rho, normals);
      // Uniform row scaling keeps tangency while restoring the box.
      for (Eigen::Index i = 0; i < rho.rows(); ++i) {
        const double m = rho.row(i).cwiseAbs().maxCoeff();
        if (m > cfg.epsilon) rho.row(i) *= cfg.epsilon / m;
        // Rows this small would lose tangency to rounding in X + rho - X.
        if (rho.row(i).norm() < 1e-9) rho.row(i).setZero();
      }
    }
  };

  Points rho = Points::Zero(x.rows(), 3);
  double current = objective(rho);
  for (int s = 0; s < cfg.steps; ++s) {
    double ce = 0.0;
    Points g = -model.input_gradient(x + rho, cloud.label, &ce);
    if (penalty == Penalty::kKnn && lambda > 0.0) {
      Points kg;
      const double delta = knn_value_and_grad(x + rho, k, &kg) - knn_clean;
      g += lambda * sign(delta) * kg;
    }
    zero_unmasked(g, mask);
    const double gnorm = max_row_norm(g);
    if (!(gnorm > 0.0)) break;
    bool accepted = false;
    double t = cfg.step_size / gnorm;
    for (int bt = 0; bt < 12 && !accepted; ++bt, t *= 0.5) {
      Points cand = rho - t * g;
      if (penalty != Penalty::kKnn) shrink_rows(cand, t * lambda, mask);
      project(cand);
      const double value = objective(cand);
      if (value < current) {
        rho = std::move(cand);
        current = value;
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  return finish_shift(model, cloud, rho, cfg.kind);
}

}  // namespace

const char* attack_kind_name(AttackKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  for (const auto& kn : kKindNames) {
    if (name == kn.name) return kn.kind;
  }
  throw Error(ErrorCode::kConfig, "unknown attack kind '" + name + "'");
}

bool is_shifting(AttackKind kind) {
  return kind != AttackKind::kAdd && kind != AttackKind::kDrop;
}

void AttackConfig::validate() const {
  // epsilon == 0 is accepted as the null attack used by benchmark sweeps.
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::kConfig, "epsilon must be finite and >= 0");
  }
  if (steps < 0) throw Error(ErrorCode::kConfig, "steps must be >= 0");
  if (!(step_size >= 0.0)) throw Error(ErrorCode::kConfig, "step_size must be >= 0");
  if (!(lambda_tradeoff >= 0.0)) throw Error(ErrorCode::kConfig, "lambda_tradeoff must be >= 0");
  if (k_points < 0) throw Error(ErrorCode::kConfig, "k_points must be >= 0");
  if (kind == AttackKind::kKnn && k_points < 1) {
    throw Error(ErrorCode::kConfig, "knn attack needs k_points >= 1");
  }
  if (!(saliency_quantile > 0.0 && saliency_quantile <= 1.0)) {
    throw Error(ErrorCode::kConfig, "saliency_quantile must be in (0, 1]");
  }
  if (drop_rounds < 1) throw Error(ErrorCode::kConfig, "drop_rounds must be >= 1");
}

Eigen::VectorXd saliency_scores(const Classifier& model, const PointCloud& cloud) {
  return model.input_gradient(cloud).rowwise().norm();
}

std::vector<bool> saliency_mask(const Eigen::VectorXd& scores, double quantile) {
  const auto n = static_cast<std::size_t>(scores.size());
  const auto keep = std::min(n, static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(n) - 1e-9)));
  std::vector<bool> mask(n, false);
  const auto order = ranking(scores);
  for (std::size_t i = 0; i < keep; ++i) mask[static_cast<std::size_t>(order[i])] = true;
  return mask;
}

double chamfer_distance(const Points& a, const Points& b) {
  if (a.rows() == 0 || b.rows() == 0) return 0.0;
  double ab = 0.0, ba = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) ab += nearest_in(a.row(i), b).first;
  for (Eigen::Index i = 0; i < b.rows(); ++i) ba += nearest_in(b.row(i), a).first;
  return ab / static_cast<double>(a.rows()) + ba / static_cast<double>(b.rows());
}

double knn_regularizer(const Points& points, int k) {
  if (k < 1) throw Error(ErrorCode::kConfig, "knn regularizer needs k >= 1");
  return knn_value_and_grad(points, k, nullptr);
}

Points estimate_normals(const Points& points, int neighbors) {
  const auto nbrs = knn_indices(points, neighbors);
  Points normals(points.rows(), 3);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto& idx = nbrs[static_cast<std::size_t>(i)];
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Eigen::RowVector3d mean = points.row(i);
    for (int j : idx) mean += points.row(j);
    mean /= static_cast<double>(idx.size() + 1);
    auto add = [&](const Eigen::RowVector3d& p) {
      const Eigen::RowVector3d d = p - mean;
      cov += d.transpose() * d;
    };
    add(points.row(i));
    for (int j : idx) add(points.row(j));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const auto& ev = eig.eigenvalues();  // ascending
    if (idx.size() < 4 || !(ev(1) > 1e-12 * std::max(ev(2), 1e-300))) {
      normals.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
    } else {
      normals.row(i) = eig.eigenvectors().col(0).transpose().normalized();
    }
  }
  return normals;
}

Points project_tangent(const Points& rho, const Points& normals) {
  Points out = rho;
  for (Eigen::Index i = 0; i < rho.rows(); ++i) {
    if (!normals.row(i).allFinite()) continue;
    out.row(i) -= rho.row(i).dot(normals.row(i)) * normals.row(i);
  }
  return out;
}

PerturbationRecord attack_ifgm(const Classifier& model, const PointCloud& cloud,
                               const AttackConfig& cfg) {
  check_common(cloud, cfg, AttackKind::kIfgm);
  const auto mask = saliency_mask(saliency_scores(model, cloud), cfg.saliency_quantile);
  Points rho = Points::Zero(cloud.size(), 3);
  for (int s = 0; s < cfg.steps; ++s) {
    const Points g = model.input_gradient(cloud.points + rho, cloud.label);
    rho += cfg.step_size * g.unaryExpr([](double v) { return sign(v); });
    zero_unmasked(rho, mask);
    clamp_box(rho, cfg.epsilon);
  }
  return finish_shift(model, cloud, rho, AttackKind::kIfgm);
}

PerturbationRecord attack_pgd(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg) {
  check_common(cloud, cfg, AttackKind::kPgd);
  const auto mask = saliency_mask(saliency_scores(model, cloud), cfg.saliency_quantile);
  Points rho = Points::Zero(cloud.size(), 3);
  if (cfg.epsilon > 0.0) {
    Rng rng(cfg.seed);
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      for (int d = 0; d < 3; ++d) rho(i, d) = rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
    zero_unmasked(rho, mask);
  }
  for (int s = 0; s < cfg.steps; ++s) {
    const Points g = model.input_gradient(cloud.points + rho, cloud.label);
    rho += cfg.step_size * g.unaryExpr([](double v) { return sign(v); });
    zero_unmasked(rho, mask);
    clamp_box(rho, cfg.epsilon);
  }
  return finish_shift(model, cloud, rho, AttackKind::kPgd);
}

PerturbationRecord attack_perturb(const Classifier& model, const PointCloud& cloud,
                                  const AttackConfig& cfg) {
  check_common(cloud, cfg, AttackKind::kPerturb);
  return penalized_descent(model, cloud, cfg, Penalty::kL2, nullptr);
}

PerturbationRecord attack_knn(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg) {
  check_common(cloud, cfg, AttackKind::kKnn);
  return penalized_descent(model, cloud, cfg, Penalty::kKnn, nullptr);
}

PerturbationRecord attack_sia(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg) {
  check_common(cloud, cfg, AttackKind::kSia);
  int skips = 0;
  auto rec = penalized_descent(model, cloud, cfg, Penalty::kL2Tangent, &skips);
  rec.tangent_skips = skips;
  return rec;
}

PerturbationRecord attack_drop(const Classifier& model, const PointCloud& cloud,
                               const AttackConfig& cfg) {
  check_common(cloud, cfg, AttackKind::kDrop);
  const int n = cloud.size();
  if (cfg.k_points >= n) {
    throw Error(ErrorCode::kConfig, "drop k_points (" + std::to_string(cfg.k_points) +
                                        ") must be < N (" + std::to_string(n) + ")");
  }
  // Indices into the original cloud that are still present.
  std::vector<int> alive(static_cast<std::size_t>(n));
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<int> removed;
  int left = cfg.k_points;
  for (int round = 0; round < cfg.drop_rounds && left > 0; ++round) {
    const int take = (left + (cfg.drop_rounds - round) - 1) / (cfg.drop_rounds - round);
    PointCloud current{Points(static_cast<Eigen::Index>(alive.size()), 3), cloud.label};
    for (std::size_t i = 0; i < alive.size(); ++i) {
      current.points.row(static_cast<Eigen::Index>(i)) = cloud.points.row(alive[i]);
    }
    Eigen::VectorXd score = saliency_scores(model, current);
    if (cfg.lambda_tradeoff > 0.0) {
      // Removing an isolated point costs more Chamfer distance.
      for (Eigen::Index i = 0; i < current.points.rows(); ++i) {
        Points others(current.points.rows() - 1, 3);
        others << current.points.topRows(i), current.points.bottomRows(current.points.rows() - i - 1);
        score(i) -= cfg.lambda_tradeoff * nearest_in(current.points.row(i), others).first;
      }
    }
    const auto order = ranking(score);
    std::vector<int> drop_local(order.begin(), order.begin() + take);
    std::sort(drop_local.begin(), drop_local.end(), std::greater<>());
    for (int local : drop_local) {
      removed.push_back(alive[static_cast<std::size_t>(local)]);
      alive.erase(alive.begin() + local);
    }
    left -= take;
  }
  std::sort(removed.begin(), removed.end());

  PerturbationRecord rec;
  rec.kind = AttackKind::kDrop;
  rec.original = cloud;
  rec.perturbed.label = cloud.label;
  rec.perturbed.points.resize(static_cast<Eigen::Index>(alive.size()), 3);
  for (std::size_t i = 0; i < alive.size(); ++i) {
    rec.perturbed.points.row(static_cast<Eigen::Index>(i)) = cloud.points.row(alive[i]);
  }
  rec.rho = Points::Zero(n, 3);
  for (int r : removed) rec.rho.row(r).setConstant(std::numeric_limits<double>::quiet_NaN());
  rec.touched = removed;
  rec.success = !removed.empty() &&
                model.predict(rec.perturbed.points) != model.predict(cloud.points);
  return rec;
}

PerturbationRecord attack_add(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg) {
  check_common(cloud, cfg, AttackKind::kAdd);
  const int n = cloud.size();
  const int k = cfg.k_points;
  PerturbationRecord rec;
  rec.kind = AttackKind::kAdd;
  rec.original = cloud;
  rec.perturbed = cloud;
  rec.rho = Points::Zero(n + k, 3);
  if (k == 0) return rec;

  // Added points start on the most salient existing points.
  const auto order = ranking(saliency_scores(model, cloud));
  Points seeds(k, 3);
  for (int j = 0; j < k; ++j) {
    const int src = order[static_cast<std::size_t>(j % n)];
    rec.touched.push_back(src);
    seeds.row(j) = cloud.points.row(src);
  }
  const double denom = static_cast<double>(n + k);
  auto assemble = [&](const Points& added) {
    Points all(n + k, 3);
    all << cloud.points, added;
    return all;
  };
  // Chamfer(X, X u A) reduces to sum_a d(a, X) / (N + k): every original
  // point is its own nearest neighbour.
  auto objective = [&](const Points& added) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < added.rows(); ++j) d += nearest_in(added.row(j), cloud.points).first;
    return -model.loss(assemble(added), cloud.label) + cfg.lambda_tradeoff * d / denom;
  };

  Points added = seeds;
  double current = objective(added);
  for (int s = 0; s < cfg.steps; ++s) {
    const Points full_grad = -model.input_gradient(assemble(added), cloud.label);
    Points g = full_grad.bottomRows(k);
    if (cfg.lambda_tradeoff > 0.0) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto [d, arg] = nearest_in(added.row(j), cloud.points);
        if (d > 0.0) {
          g.row(j) += cfg.lambda_tradeoff / denom * (added.row(j) - cloud.points.row(arg)) / d;
        }
      }
    }
    const double gnorm = max_row_norm(g);
    if (!(gnorm > 0.0)) break;
    bool accepted = false;
    double t = cfg.step_size / gnorm;
    for (int bt = 0; bt < 12 && !accepted; ++bt, t *= 0.5) {
      Points cand = added - t * g;
      const double value = objective(cand);
      if (value < current) {
        added = std::move(cand);
        current = value;
        accepted = true;
      }
    }
    if (!accepted) break;
  }
  rec.perturbed.points = assemble(added);
  rec.rho.bottomRows(k) = added - seeds;
  rec.budget_used.max_norm = rec.rho.cwiseAbs().maxCoeff();
  rec.budget_used.mean_norm = rec.rho.bottomRows(k).rowwise().norm().mean();
  rec.success = model.predict(rec.perturbed.points) != model.predict(cloud.points);
  return rec;
}

PerturbationRecord run_attack(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::kAdd: return attack_add(model, cloud, cfg);
    case AttackKind::kDrop: return attack_drop(model, cloud, cfg);
    case AttackKind::kIfgm: return attack_ifgm(model, cloud, cfg);
    case AttackKind::kPgd: return attack_pgd(model, cloud, cfg);
    case AttackKind::kPerturb: return attack_perturb(model, cloud, cfg);
    case AttackKind::kKnn: return attack_knn(model, cloud, cfg);
    case AttackKind::kSia: return attack_sia(model, cloud, cfg);
  }
  throw Error(ErrorCode::kConfig, "unknown attack kind");
}

std::uint64_t attack_invocations() { return g_attack_calls.load(); }

void save_attack_records(const std::string& path,
                         const std::vector<PerturbationRecord>& records,
                         const AttackConfig& cfg, int num_classes) {
  std::vector<PointCloud> clouds;
  clouds.reserve(records.size());
  nlohmann::json meta;
  meta["attack"] = cfg;
  meta["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    clouds.push_back(r.perturbed);
    meta["records"].push_back({{"kind", attack_kind_name(r.kind)},
                               {"epsilon", cfg.epsilon},
                               {"steps", cfg.steps},
                               {"success", r.success},
                               {"budget_used",
                                {{"max_norm", r.budget_used.max_norm},
                                 {"mean_norm", r.budget_used.mean_norm}}},
                               {"touched", r.touched},
                               {"tangent_skips", r.tangent_skips}});
  }
  save_dataset(path, clouds, num_classes);
  std::ofstream f(path + ".meta.json", std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write attack metadata for '" + path + "'");
  f << meta.dump(2) << '\n';
}

}  // namespace pcr
