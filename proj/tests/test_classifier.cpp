#include "fixtures.hpp"

#include "pcrobust/error.hpp"

#include <doctest.h>

#include <numeric>

using namespace pcr;

namespace {

const std::vector<PointCloud>& dataset() {
  static const auto data = generate_dataset(testing::small_spec(75));
  return data;
}

}  // namespace

TEST_CASE("config validation") {
  ClassifierConfig c = testing::small_classifier();
  CHECK_NOTHROW(c.validate());
  c.pooled_dim = 32;
  CHECK_THROWS_AS(c.validate(), Error);
  c = testing::small_classifier();
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("initialization is deterministic in the seed") {
  const Classifier a(testing::small_classifier());
  const Classifier b(testing::small_classifier());
  CHECK(a.parameters() == b.parameters());
  auto cfg = testing::small_classifier();
  cfg.seed = 2;
  const Classifier c(cfg);
  CHECK(a.parameters() != c.parameters());
}

TEST_CASE("logits are invariant to point order") {
  const Classifier model(testing::small_classifier());
  const auto& cloud = dataset()[7];
  std::vector<int> perm(cloud.points.rows());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(5);
  rng.shuffle(perm);
  Points shuffled(cloud.points.rows(), 3);
  for (Eigen::Index i = 0; i < shuffled.rows(); ++i) shuffled.row(i) = cloud.points.row(perm[i]);
  const Eigen::VectorXd a = model.forward(cloud.points);
  const Eigen::VectorXd b = model.forward(shuffled);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(softmax(a).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("untrained model sits near chance") {
  const auto data = generate_dataset(testing::small_spec(75));  // 300 clouds
  double total = 0.0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    auto cfg = testing::small_classifier();
    cfg.seed = s;
    total += accuracy(Classifier(cfg), data);
  }
  CHECK(std::abs(total / 10.0 - 0.25) <= 0.1);
}

TEST_CASE("zeroed head gives the uniform softmax") {
  Classifier model(testing::small_classifier());
  model.zero_output_layer();
  const Eigen::VectorXd p = softmax(model.forward(dataset()[0].points));
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));
  // Constant output: the input gradient vanishes.
  CHECK(model.input_gradient(dataset()[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("input gradient matches central differences") {
  const Classifier model(testing::small_classifier());
  const auto& cloud = dataset()[11];
  const Points grad = model.input_gradient(cloud);
  REQUIRE(grad.rows() == cloud.points.rows());
  Rng rng(9);
  const double h = 1e-4;
  int checked = 0;
  while (checked < 10) {
    const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(cloud.points.rows())));
    const auto k = static_cast<Eigen::Index>(rng.index(3));
    // Skip coordinates whose max-pool winners do not depend on them.
    if (std::abs(grad(i, k)) < 1e-6) continue;
    Points plus = cloud.points, minus = cloud.points;
    plus(i, k) += h;
    minus(i, k) -= h;
    const double fd = (model.loss(plus, cloud.label) - model.loss(minus, cloud.label)) / (2 * h);
    CHECK(std::abs(fd - grad(i, k)) <= 1e-3 * std::max(std::abs(fd), 1e-6));
    ++checked;
  }
}

TEST_CASE("parameter gradient matches central differences") {
  Classifier model(testing::small_classifier());
  const auto& cloud = dataset()[3];
  Classifier::Cache cache;
  Eigen::VectorXd dlogits;
  cross_entropy(model.forward(cloud.points, &cache), cloud.label, &dlogits);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameters().size());
  model.backward(cache, dlogits, &grad, nullptr);
  Rng rng(4);
  const double h = 1e-5;
  int checked = 0;
  while (checked < 20) {
    const auto p = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(grad.size())));
    if (std::abs(grad[p]) < 1e-6) continue;
    const double keep = model.parameters()[p];
    model.parameters()[p] = keep + h;
    const double up = model.loss(cloud.points, cloud.label);
    model.parameters()[p] = keep - h;
    const double down = model.loss(cloud.points, cloud.label);
    model.parameters()[p] = keep;
    const double fd = (up - down) / (2 * h);
    CHECK(std::abs(fd - grad[p]) <= 1e-3 * std::abs(fd) + 1e-7);
    ++checked;
  }
}

TEST_CASE("training separates the synthetic families") {
  const auto& data = dataset();
  const Classifier model = testing::trained_classifier(data, 200);
  CHECK(accuracy(model, data) >= 0.9);
  // A misclassified cloud still has a non-zero gradient.
  for (const auto& c : data) {
    if (model.predict(c.points) != c.label) {
      CHECK(model.input_gradient(c).norm() > 0.0);
      break;
    }
  }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Classifier model(testing::small_classifier());
  const Eigen::VectorXd before = model.parameters();
  Adam opt;
  opt.lr = 0.0;
  std::vector<PointCloud> batch(dataset().begin(), dataset().begin() + 8);
  const double loss = train_step(model, opt, batch);
  CHECK(std::isfinite(loss));
  CHECK(model.parameters() == before);
}

TEST_CASE("repeated identical batch drives the loss down") {
  Classifier model(testing::small_classifier());
  Adam opt;
  opt.lr = 1e-3;
  std::vector<PointCloud> batch(dataset().begin(), dataset().begin() + 16);
  double prev = train_step(model, opt, batch);
  for (int i = 0; i < 20; ++i) {
    const double loss = train_step(model, opt, batch);
    CHECK(loss <= prev + 1e-3);
    prev = loss;
  }
}

TEST_CASE("exploding loss raises a divergence error") {
  Classifier model(testing::small_classifier());
  model.parameters() *= 1e4;
  Adam opt;
  std::vector<PointCloud> batch(dataset().begin(), dataset().begin() + 4);
  try {
    train_step(model, opt, batch);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK((e.code() == ErrorCode::kDivergence || e.code() == ErrorCode::kNumerical));
  }
}

TEST_CASE("non-finite activations report the layer") {
  const Classifier model(testing::small_classifier());
  Points p = dataset()[0].points;
  p(0, 0) = std::numeric_limits<double>::infinity();
  try {
    model.forward(p);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(e.layer() >= 0);
  }
}

TEST_CASE("checkpoints round-trip and reject config mismatch") {
  const auto dir = testing::scratch_dir("classifier");
  const Classifier model = testing::trained_classifier(dataset(), 20);
  const auto path = (dir / "m.bin").string();
  model.save(path);
  const Classifier back = Classifier::load(path, testing::small_classifier());
  CHECK(back.parameters() == model.parameters());
  CHECK(Classifier::load(path).config() == model.config());
  auto other = testing::small_classifier();
  other.head_width = 16;
  CHECK_THROWS_AS(Classifier::load(path, other), Error);
  CHECK_THROWS_AS(Classifier::load((dir / "missing.bin").string()), Error);
}
