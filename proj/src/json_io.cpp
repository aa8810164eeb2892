#include "pcrobust/json_io.hpp"

#include <algorithm>

namespace pcr {

void to_json(nlohmann::json& j, const SyntheticDatasetSpec& v) {
  j = {{"classes", v.classes},
       {"points_per_cloud", v.points_per_cloud},
       {"clouds_per_class", v.clouds_per_class},
       {"noise_sigma", v.noise_sigma},
       {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, SyntheticDatasetSpec& v) {
  ConfigReader r(j);
  r.field("classes", v.classes);
  r.field("points_per_cloud", v.points_per_cloud);
  r.field("clouds_per_class", v.clouds_per_class);
  r.field("noise_sigma", v.noise_sigma);
  r.field("seed", v.seed);
  r.finish();
  if (v.classes.size() < 2) throw Error(ErrorCode::kConfig, "classes: need at least 2 families");
  if (v.points_per_cloud < kMinPoints) {
    throw Error(ErrorCode::kConfig, "points_per_cloud: must be >= 8");
  }
  if (v.clouds_per_class <= 0) throw Error(ErrorCode::kConfig, "clouds_per_class: must be > 0");
  if (!(v.noise_sigma >= 0.0)) throw Error(ErrorCode::kConfig, "noise_sigma: must be >= 0");
  const auto& known = known_shape_families();
  for (std::size_t i = 0; i < v.classes.size(); ++i) {
    if (std::find(known.begin(), known.end(), v.classes[i]) == known.end()) {
      throw Error(ErrorCode::kConfig, "classes[" + std::to_string(i) +
                                          "]: unknown shape family '" + v.classes[i] + "'");
    }
  }
}

void to_json(nlohmann::json& j, const ClassifierConfig& v) {
  j = {{"encoder_widths", v.encoder_widths},
       {"pooled_dim", v.pooled_dim},
       {"head_width", v.head_width},
       {"num_classes", v.num_classes},
       {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& v) {
  ConfigReader r(j);
  r.field("encoder_widths", v.encoder_widths);
  r.field("pooled_dim", v.pooled_dim);
  r.field("head_width", v.head_width);
  r.field("num_classes", v.num_classes);
  r.field("seed", v.seed);
  r.finish();
  validate_here(v);
}

void to_json(nlohmann::json& j, const AttackConfig& v) {
  j = {{"kind", attack_kind_name(v.kind)},
       {"epsilon", v.epsilon},
       {"steps", v.steps},
       {"step_size", v.step_size},
       {"lambda_tradeoff", v.lambda_tradeoff},
       {"k_points", v.k_points},
       {"saliency_quantile", v.saliency_quantile},
       {"drop_rounds", v.drop_rounds},
       {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, AttackConfig& v) {
  ConfigReader r(j);
  std::string kind = attack_kind_name(v.kind);
  r.field("kind", kind);
  try {
    v.kind = parse_attack_kind(kind);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("kind: ") + e.what());
  }
  r.field("epsilon", v.epsilon);
  r.field("steps", v.steps);
  r.field("step_size", v.step_size);
  r.field("lambda_tradeoff", v.lambda_tradeoff);
  r.field("k_points", v.k_points);
  r.field("saliency_quantile", v.saliency_quantile);
  r.field("drop_rounds", v.drop_rounds);
  r.field("seed", v.seed);
  r.finish();
  validate_here(v);
}

void to_json(nlohmann::json& j, const MineConfig& v) {
  j = {{"hidden", v.hidden},
       {"learning_rate", v.learning_rate},
       {"ema_decay", v.ema_decay},
       {"cross_weight", v.cross_weight},
       {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, MineConfig& v) {
  ConfigReader r(j);
  r.field("hidden", v.hidden);
  r.field("learning_rate", v.learning_rate);
  r.field("ema_decay", v.ema_decay);
  r.field("cross_weight", v.cross_weight);
  r.field("seed", v.seed);
  r.finish();
  if (v.hidden.empty()) throw Error(ErrorCode::kConfig, "hidden: must not be empty");
  if (!(v.learning_rate >= 0.0)) throw Error(ErrorCode::kConfig, "learning_rate: must be >= 0");
  if (!(v.ema_decay >= 0.0 && v.ema_decay < 1.0)) {
    throw Error(ErrorCode::kConfig, "ema_decay: must be in [0, 1)");
  }
  if (!(v.cross_weight >= 0.0 && v.cross_weight < 1.0)) {
    throw Error(ErrorCode::kConfig, "cross_weight: must be in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const AdvisorConfig& v) {
  j = {{"alpha", v.alpha},
       {"beta", v.beta},
       {"window", v.window},
       {"advisor_widths", v.advisor_widths},
       {"anchor_warmup_fraction", v.anchor_warmup_fraction},
       {"anchor_weight", v.anchor_weight},
       {"learning_rate", v.learning_rate},
       {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, AdvisorConfig& v) {
  ConfigReader r(j);
  r.field("alpha", v.alpha);
  r.field("beta", v.beta);
  r.field("window", v.window);
  r.field("advisor_widths", v.advisor_widths);
  r.field("anchor_warmup_fraction", v.anchor_warmup_fraction);
  r.field("anchor_weight", v.anchor_weight);
  r.field("learning_rate", v.learning_rate);
  r.field("seed", v.seed);
  r.finish();
  validate_here(v);
}

}  // namespace pcr
