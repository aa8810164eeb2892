#include "pcrobust/classifier.hpp"

#include "pcrobust/error.hpp"
#include "pcrobust/json_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pcr {

void ClassifierConfig::validate() const {
  if (encoder_widths.empty()) throw Error(ErrorCode::kConfig, "encoder_widths is empty");
  for (int w : encoder_widths) {
    if (w <= 0) throw Error(ErrorCode::kConfig, "encoder widths must be positive");
  }
  if (pooled_dim != encoder_widths.back()) {
    throw Error(ErrorCode::kConfig, "pooled_dim must equal the last encoder width");
  }
  if (head_width <= 0) throw Error(ErrorCode::kConfig, "head_width must be positive");
  if (num_classes < 2) throw Error(ErrorCode::kConfig, "num_classes must be >= 2");
}

double cross_entropy(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* dlogits) {
  const double lse = logits.maxCoeff() +
                     std::log((logits.array() - logits.maxCoeff()).exp().sum());
  if (dlogits) {
    *dlogits = (logits.array() - lse).exp().matrix();
    (*dlogits)(label) -= 1.0;
  }
  return lse - logits(label);
}

namespace {

std::vector<int> encoder_shape(const ClassifierConfig& c) {
  std::vector<int> w{3};
  w.insert(w.end(), c.encoder_widths.begin(), c.encoder_widths.end());
  return w;
}

}  // namespace

Classifier::Classifier(const ClassifierConfig& config) : config_(config) {
  config_.validate();
  encoder_ = DenseStack(encoder_shape(config_), Activation::kRelu, true, 0);
  head_ = DenseStack({config_.pooled_dim, config_.head_width, config_.num_classes},
                     Activation::kRelu, false, encoder_.param_count());
  params_ = Eigen::VectorXd::Zero(encoder_.param_count() + head_.param_count());
  Rng rng(config_.seed);
  encoder_.init(params_, rng);
  head_.init(params_, rng);
}

Eigen::VectorXd Classifier::forward(const Points& points, Cache* cache) const {
  const Eigen::MatrixXd input = points;
  const Eigen::MatrixXd features =
      encoder_.forward(params_, input, cache ? &cache->encoder : nullptr, 0);
  Eigen::RowVectorXd pooled(features.cols());
  if (cache) cache->argmax.assign(static_cast<std::size_t>(features.cols()), 0);
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    Eigen::Index arg = 0;
    pooled(j) = features.col(j).maxCoeff(&arg);
    if (cache) cache->argmax[static_cast<std::size_t>(j)] = arg;
  }
  const Eigen::MatrixXd logits = head_.forward(
      params_, pooled, cache ? &cache->head : nullptr, encoder_.num_layers());
  return logits.row(0).transpose();
}

void Classifier::backward(const Cache& cache, const Eigen::VectorXd& dlogits,
                          Eigen::VectorXd* dparams, Points* dinput) const {
  if (dparams && dparams->size() != params_.size()) {
    *dparams = Eigen::VectorXd::Zero(params_.size());
  }
  Eigen::MatrixXd dpooled;
  head_.backward(params_, cache.head, dlogits.transpose(), dparams, &dpooled);
  const Eigen::Index n = cache.encoder.act.front().rows();
  Eigen::MatrixXd dfeatures = Eigen::MatrixXd::Zero(n, dpooled.cols());
  for (Eigen::Index j = 0; j < dpooled.cols(); ++j) {
    dfeatures(cache.argmax[static_cast<std::size_t>(j)], j) = dpooled(0, j);
  }
  if (dinput) {
    Eigen::MatrixXd dx;
    encoder_.backward(params_, cache.encoder, std::move(dfeatures), dparams, &dx);
    *dinput = dx;
  } else {
    encoder_.backward(params_, cache.encoder, std::move(dfeatures), dparams, nullptr);
  }
}

int Classifier::predict(const Points& points) const {
  Eigen::Index arg = 0;
  forward(points).maxCoeff(&arg);
  return static_cast<int>(arg);
}

Points Classifier::input_gradient(const PointCloud& cloud) const {
  return input_gradient(cloud.points, cloud.label);
}

Points Classifier::input_gradient(const Points& points, int label, double* loss) const {
  Cache cache;
  const Eigen::VectorXd logits = forward(points, &cache);
  Eigen::VectorXd dlogits;
  const double l = cross_entropy(logits, label, &dlogits);
  if (loss) *loss = l;
  Points grad;
  backward(cache, dlogits, nullptr, &grad);
  return grad;
}

double Classifier::loss(const Points& points, int label) const {
  return cross_entropy(forward(points), label, nullptr);
}

void Classifier::zero_output_layer() {
  const int last = head_.num_layers() - 1;
  head_.weight(params_, last).setZero();
  head_.bias(params_, last).setZero();
}

// Checkpoint layout: "PCRCKPT\n", u32 version, u64 length + config JSON,
// u64 parameter count, f64 parameters (host byte order).
namespace {
constexpr char kCheckpointMagic[] = "PCRCKPT\n";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void Classifier::save(const std::string& path) const {
  const std::string echo = nlohmann::json(config_).dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  auto put = [&f](const auto& v) { f.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  put(kCheckpointVersion);
  put(static_cast<std::uint64_t>(echo.size()));
  f.write(echo.data(), static_cast<std::streamsize>(echo.size()));
  put(static_cast<std::uint64_t>(params_.size()));
  f.write(reinterpret_cast<const char*>(params_.data()),
          static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!f) throw Error(ErrorCode::kIo, "write to '" + path + "' failed");
}

namespace {

struct CheckpointBlob {
  ClassifierConfig config;
  Eigen::VectorXd params;
};

CheckpointBlob read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw ParseError(pos, "truncated checkpoint");
  };
  auto get = [&](auto& v) {
    need(sizeof(v));
    std::memcpy(&v, bytes.data() + pos, sizeof(v));
    pos += sizeof(v);
  };
  need(sizeof(kCheckpointMagic) - 1);
  if (bytes.compare(0, sizeof(kCheckpointMagic) - 1, kCheckpointMagic) != 0) {
    throw ParseError(0, "not a checkpoint file");
  }
  pos += sizeof(kCheckpointMagic) - 1;
  std::uint32_t version = 0;
  get(version);
  if (version != kCheckpointVersion) {
    throw ParseError(pos - sizeof(version),
                     "unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t len = 0;
  get(len);
  need(len);
  CheckpointBlob blob;
  try {
    blob.config = nlohmann::json::parse(bytes.substr(pos, len)).get<ClassifierConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(pos, std::string("bad config echo: ") + e.what());
  }
  pos += len;
  std::uint64_t count = 0;
  get(count);
  need(count * sizeof(double));
  blob.params.resize(static_cast<Eigen::Index>(count));
  std::memcpy(blob.params.data(), bytes.data() + pos, count * sizeof(double));
  pos += count * sizeof(double);
  if (pos != bytes.size()) throw ParseError(pos, "trailing bytes in checkpoint");
  return blob;
}

}  // namespace

Classifier Classifier::load(const std::string& path, const ClassifierConfig& expected) {
  auto blob = read_checkpoint(path);
  // The seed only shapes initialization, so it is not part of the match.
  ClassifierConfig arch = expected;
  arch.seed = blob.config.seed;
  if (!(blob.config == arch)) {
    throw Error(ErrorCode::kConfig, "checkpoint config does not match: file has " +
                                        nlohmann::json(blob.config).dump() +
                                        ", expected " + nlohmann::json(expected).dump());
  }
  Classifier model(blob.config);
  if (blob.params.size() != model.params_.size()) {
    throw Error(ErrorCode::kConfig, "checkpoint parameter count mismatch");
  }
  model.params_ = std::move(blob.params);
  return model;
}

Classifier Classifier::load(const std::string& path) {
  auto blob = read_checkpoint(path);
  return load(path, blob.config);
}

double train_step(Classifier& model, Adam& optimizer, std::span<const PointCloud> batch) {
  if (batch.empty()) throw Error(ErrorCode::kConfig, "train_step needs a non-empty batch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameters().size());
  double total = 0.0;
  Classifier::Cache cache;
  Eigen::VectorXd dlogits;
  for (const auto& cloud : batch) {
    const Eigen::VectorXd logits = model.forward(cloud.points, &cache);
    total += cross_entropy(logits, cloud.label, &dlogits);
    model.backward(cache, dlogits, &grad, nullptr);
  }
  const double n = static_cast<double>(batch.size());
  const double loss = total / n;
  if (!std::isfinite(loss) || loss > 1e6) {
    throw Error(ErrorCode::kDivergence, "training loss diverged: " + std::to_string(loss));
  }
  grad /= n;
  optimizer.step(model.parameters(), grad);
  return loss;
}

double accuracy(const Classifier& model, std::span<const PointCloud> clouds) {
  if (clouds.empty()) return 0.0;
  int hits = 0;
  for (const auto& c : clouds) hits += model.predict(c.points) == c.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(clouds.size());
}

}  // namespace pcr
