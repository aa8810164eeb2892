#include "pcrobust/nn.hpp"

#include "pcrobust/error.hpp"

#include <cmath>

namespace pcr {

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  if (lr == 0.0) return;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

DenseStack::DenseStack(std::vector<int> widths, Activation hidden, bool activate_last,
                       Eigen::Index offset)
    : widths_(std::move(widths)),
      hidden_(hidden),
      activate_last_(activate_last),
      offset_(offset) {
  Eigen::Index at = offset_;
  for (int l = 0; l < num_layers(); ++l) {
    w_offset_.push_back(at);
    at += static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1];
    b_offset_.push_back(at);
    at += widths_[l + 1];
  }
  count_ = at - offset_;
}

void DenseStack::init(Eigen::VectorXd& params, Rng& rng) const {
  for (int l = 0; l < num_layers(); ++l) {
    const double scale = std::sqrt(2.0 / widths_[l]);
    auto w = weight(params, l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.normal();
    }
    bias(params, l).setZero();
  }
}

Eigen::Map<const Eigen::MatrixXd> DenseStack::weight(const Eigen::VectorXd& params,
                                                     int layer) const {
  return {params.data() + w_offset_[layer], widths_[layer], widths_[layer + 1]};
}

Eigen::Map<const Eigen::RowVectorXd> DenseStack::bias(const Eigen::VectorXd& params,
                                                      int layer) const {
  return {params.data() + b_offset_[layer], widths_[layer + 1]};
}

Eigen::Map<Eigen::MatrixXd> DenseStack::weight(Eigen::VectorXd& params, int layer) const {
  return {params.data() + w_offset_[layer], widths_[layer], widths_[layer + 1]};
}

Eigen::Map<Eigen::RowVectorXd> DenseStack::bias(Eigen::VectorXd& params, int layer) const {
  return {params.data() + b_offset_[layer], widths_[layer + 1]};
}

Eigen::MatrixXd DenseStack::forward(const Eigen::VectorXd& params,
                                    const Eigen::MatrixXd& input, Cache* cache,
                                    int layer_base) const {
  if (cache) {
    cache->act.assign(1, input);
    cache->pre.clear();
  }
  Eigen::MatrixXd x = input;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = x * weight(params, l);
    z.rowwise() += bias(params, l);
    if (cache) cache->pre.push_back(z);
    if (activated(l)) {
      if (hidden_ == Activation::kRelu) {
        x = z.cwiseMax(0.0);
      } else {
        x = z.array().tanh().matrix();
      }
    } else {
      x = std::move(z);
    }
    if (!x.allFinite()) {
      throw NumericalError(layer_base + l, "non-finite activation in layer " +
                                               std::to_string(layer_base + l));
    }
    if (cache) cache->act.push_back(x);
  }
  return x;
}

void DenseStack::backward(const Eigen::VectorXd& params, const Cache& cache,
                          Eigen::MatrixXd dout, Eigen::VectorXd* dparams,
                          Eigen::MatrixXd* dinput) const {
  for (int l = num_layers() - 1; l >= 0; --l) {
    if (activated(l)) {
      if (hidden_ == Activation::kRelu) {
        dout = (cache.pre[l].array() > 0.0).select(dout, 0.0);
      } else {
        dout = dout.cwiseProduct(
            (1.0 - cache.act[l + 1].array().square()).matrix());
      }
    }
    if (dparams) {
      Eigen::Map<Eigen::MatrixXd> dw(dparams->data() + w_offset_[l], widths_[l],
                                     widths_[l + 1]);
      Eigen::Map<Eigen::RowVectorXd> db(dparams->data() + b_offset_[l], widths_[l + 1]);
      dw.noalias() += cache.act[l].transpose() * dout;
      db += dout.colwise().sum();
    }
    if (l > 0 || dinput) {
      dout = dout * weight(params, l).transpose();
    }
  }
  if (dinput) *dinput = std::move(dout);
}

double log_mean_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().mean());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace pcr
