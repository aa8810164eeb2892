#pragma once

#include "pcrobust/rng.hpp"

#include <Eigen/Core>

#include <vector>

namespace pcr {

enum class Activation { kRelu, kTanh };

/// Adam over a flat parameter vector.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long long t = 0;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

/// A stack of fully connected layers whose weights live in an externally owned
/// flat vector starting at `offset`. Rows of the input matrix are samples.
class DenseStack {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> act;  // act[0] is the input
    std::vector<Eigen::MatrixXd> pre;  // pre-activation of each layer
  };

  DenseStack() = default;
  DenseStack(std::vector<int> widths, Activation hidden, bool activate_last,
             Eigen::Index offset = 0);

  Eigen::Index param_count() const { return count_; }
  Eigen::Index offset() const { return offset_; }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }

  /// He-style normal init for weights, zero biases.
  void init(Eigen::VectorXd& params, Rng& rng) const;

  Eigen::Map<const Eigen::MatrixXd> weight(const Eigen::VectorXd& params, int layer) const;
  Eigen::Map<const Eigen::RowVectorXd> bias(const Eigen::VectorXd& params, int layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(Eigen::VectorXd& params, int layer) const;
  Eigen::Map<Eigen::RowVectorXd> bias(Eigen::VectorXd& params, int layer) const;

  /// Throws NumericalError with `layer_base + layer` when a layer output goes
  /// non-finite.
  Eigen::MatrixXd forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& input,
                          Cache* cache, int layer_base = 0) const;

  /// Accumulates into dparams (same layout as params) when non-null and writes
  /// the input gradient when dinput is non-null.
  void backward(const Eigen::VectorXd& params, const Cache& cache, Eigen::MatrixXd dout,
                Eigen::VectorXd* dparams, Eigen::MatrixXd* dinput) const;

 private:
  bool activated(int layer) const {
    return layer + 1 < num_layers() || activate_last_;
  }

  std::vector<int> widths_;
  std::vector<Eigen::Index> w_offset_;
  std::vector<Eigen::Index> b_offset_;
  Activation hidden_ = Activation::kRelu;
  bool activate_last_ = false;
  Eigen::Index offset_ = 0;
  Eigen::Index count_ = 0;
};

/// Numerically stable log(mean(exp(v))).
double log_mean_exp(const Eigen::VectorXd& v);

/// Softmax probabilities of a logit vector.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

double sigmoid(double x);

}  // namespace pcr
