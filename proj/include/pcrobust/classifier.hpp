#pragma once

#include "pcrobust/core_data.hpp"
#include "pcrobust/nn.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pcr {

struct ClassifierConfig {
  std::vector<int> encoder_widths{32, 64, 128};
  int pooled_dim = 128;
  int head_width = 64;
  int num_classes = 3;
  std::uint64_t seed = 1;

  /// Throws kConfig when pooled_dim differs from the last encoder width or a
  /// size is non-positive.
  void validate() const;
  bool operator==(const ClassifierConfig&) const = default;
};

/// Cross-entropy of `logits` against `label`; writes softmax - onehot into
/// dlogits when non-null.
double cross_entropy(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* dlogits);

/// Per-point shared encoder, max pooling over points, two-layer head.
class Classifier {
 public:
  struct Cache {
    DenseStack::Cache encoder;
    DenseStack::Cache head;
    std::vector<Eigen::Index> argmax;  // winning point per pooled feature
  };

  explicit Classifier(const ClassifierConfig& config);

  const ClassifierConfig& config() const { return config_; }
  int num_classes() const { return config_.num_classes; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::VectorXd forward(const Points& points, Cache* cache = nullptr) const;

  /// Backpropagates dlogits. dparams accumulates (sized like parameters());
  /// dinput receives the per-point gradient field.
  void backward(const Cache& cache, const Eigen::VectorXd& dlogits,
                Eigen::VectorXd* dparams, Points* dinput) const;

  int predict(const Points& points) const;

  /// Gradient of cross-entropy with respect to the input coordinates.
  Points input_gradient(const PointCloud& cloud) const;
  Points input_gradient(const Points& points, int label, double* loss = nullptr) const;

  double loss(const Points& points, int label) const;

  /// Zeroes the final head layer so every input maps to the uniform softmax.
  void zero_output_layer();

  void save(const std::string& path) const;
  /// Rejects files whose config echo differs from `expected`.
  static Classifier load(const std::string& path, const ClassifierConfig& expected);
  /// Uses the config echoed in the file.
  static Classifier load(const std::string& path);

 private:
  ClassifierConfig config_;
  DenseStack encoder_;
  DenseStack head_;
  Eigen::VectorXd params_;
};

/// One Adam step on the mean cross-entropy of the batch. Returns the batch
/// loss before the update; throws kDivergence when it exceeds 1e6.
double train_step(Classifier& model, Adam& optimizer, std::span<const PointCloud> batch);

double accuracy(const Classifier& model, std::span<const PointCloud> clouds);

}  // namespace pcr
