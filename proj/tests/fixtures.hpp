#pragma once

#include "pcrobust/classifier.hpp"
#include "pcrobust/core_data.hpp"

#include <filesystem>
#include <string>

namespace pcr::testing {

inline SyntheticDatasetSpec small_spec(int per_class = 20, int n = 64) {
  SyntheticDatasetSpec s;
  s.classes = {"sphere", "cube", "cylinder", "cone"};
  s.points_per_cloud = n;
  s.clouds_per_class = per_class;
  return s;
}

inline ClassifierConfig small_classifier(int classes = 4) {
  ClassifierConfig c;
  c.encoder_widths = {16, 32, 64};
  c.pooled_dim = 64;
  c.head_width = 32;
  c.num_classes = classes;
  return c;
}

/// A classifier trained on clean data until it separates the four families.
inline Classifier trained_classifier(const std::vector<PointCloud>& data, int steps = 400,
                                     std::uint64_t seed = 3) {
  Classifier model(small_classifier());
  Adam opt;
  opt.lr = 3e-3;
  Rng rng(seed);
  std::vector<PointCloud> batch(16);
  for (int t = 0; t < steps; ++t) {
    for (auto& b : batch) b = data[rng.index(data.size())];
    train_step(model, opt, batch);
  }
  return model;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pcrobust-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace pcr::testing
