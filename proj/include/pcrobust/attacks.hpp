#pragma once

#include "pcrobust/classifier.hpp"
#include "pcrobust/core_data.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pcr {

enum class AttackKind { kAdd, kDrop, kIfgm, kPgd, kPerturb, kKnn, kSia };

const char* attack_kind_name(AttackKind kind);
/// Throws kConfig for unknown names.
AttackKind parse_attack_kind(const std::string& name);
/// True for the kinds that move existing points (ifgm, pgd, perturb, knn, sia).
bool is_shifting(AttackKind kind);

struct AttackConfig {
  AttackKind kind = AttackKind::kPgd;
  double epsilon = 0.05;
  int steps = 10;
  double step_size = 0.01;
  double lambda_tradeoff = 0.0;
  /// Points added (add), removed (drop) or neighbourhood size (knn).
  int k_points = 8;
  double saliency_quantile = 0.5;
  /// Saliency recomputations used by drop; 1 removes the top-k in one shot.
  int drop_rounds = 1;
  std::uint64_t seed = 0;

  /// Checks the ranges that do not depend on the cloud.
  void validate() const;
  bool operator==(const AttackConfig&) const = default;
};

struct BudgetUsed {
  double max_norm = 0.0;   // max |rho| over all coordinates
  double mean_norm = 0.0;  // mean row L2 norm
};

/// rho has one row per point of the original cloud for shifting kinds. For
/// drop, removed rows hold NaN and kept rows are zero. For add, rho holds the
/// original rows (zero) followed by the added points' offsets from the point
/// each was seeded on.
struct PerturbationRecord {
  PointCloud original;
  PointCloud perturbed;
  Points rho;
  AttackKind kind = AttackKind::kPgd;
  BudgetUsed budget_used;
  bool success = false;
  /// Indices into the original cloud (drop: removed points; add: seed points).
  std::vector<int> touched;
  /// SIA only: points whose neighbourhood was too degenerate for a normal.
  int tangent_skips = 0;
};

/// Row norms of the cross-entropy input gradient.
Eigen::VectorXd saliency_scores(const Classifier& model, const PointCloud& cloud);

/// Mask of the ceil(quantile * N) highest scores; ties resolved by index.
std::vector<bool> saliency_mask(const Eigen::VectorXd& scores, double quantile);

/// Symmetric Chamfer distance: mean nearest-neighbour distance a->b plus b->a.
double chamfer_distance(const Points& a, const Points& b);

/// Mean over points of the mean distance to the k nearest other points.
double knn_regularizer(const Points& points, int k);

/// Unit normals from PCA over each point's `neighbors` nearest neighbours.
/// Rows are NaN where the neighbourhood has rank < 2.
Points estimate_normals(const Points& points, int neighbors = 8);

/// Removes the normal component of each row; rows with NaN normals pass
/// through unchanged.
Points project_tangent(const Points& rho, const Points& normals);

PerturbationRecord attack_add(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg);
PerturbationRecord attack_drop(const Classifier& model, const PointCloud& cloud,
                               const AttackConfig& cfg);
PerturbationRecord attack_ifgm(const Classifier& model, const PointCloud& cloud,
                               const AttackConfig& cfg);
PerturbationRecord attack_pgd(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg);
PerturbationRecord attack_perturb(const Classifier& model, const PointCloud& cloud,
                                  const AttackConfig& cfg);
PerturbationRecord attack_knn(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg);
PerturbationRecord attack_sia(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg);

/// Dispatches on cfg.kind.
PerturbationRecord run_attack(const Classifier& model, const PointCloud& cloud,
                              const AttackConfig& cfg);

/// Total attack invocations in this process.
std::uint64_t attack_invocations();

/// Writes the perturbed clouds as a dataset file plus `<path>.meta.json`.
void save_attack_records(const std::string& path,
                         const std::vector<PerturbationRecord>& records,
                         const AttackConfig& cfg, int num_classes);

}  // namespace pcr
