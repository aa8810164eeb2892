#include "oracles.hpp"

#include "pcrobust/error.hpp"

#include <doctest.h>

#include <numeric>

using namespace pcr;
using pcr::testing::gaussian_mi;
using pcr::testing::gaussian_pairs;

namespace {

/// A network whose output layer is zero, so T is a constant (its bias).
StatisticNetwork constant_network(double c) {
  StatisticNetwork t(1, 1, {8}, 3);
  t.parameters().setZero();
  t.parameters()[t.parameters().size() - 1] = c;
  return t;
}

}  // namespace

TEST_CASE("constant statistic gives a zero estimate") {
  Rng rng(1);
  const auto pos = gaussian_pairs(0.9, 64, rng);
  const auto neg = shuffled_pairs(pos, rng.derangement(64));
  for (double c : {0.0, 3.5, -12.0}) {
    const auto est = dv_estimate(constant_network(c), pos, neg);
    CHECK(std::abs(est.value) < 1e-12);
    CHECK(per_sample_mi_proxy(est).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("estimate bookkeeping and shift invariance") {
  Rng rng(2);
  const StatisticNetwork t(1, 1, {16, 16}, 5);
  const auto pos = gaussian_pairs(0.5, 50, rng);
  const auto neg = shuffled_pairs(pos, rng.derangement(50));
  const auto est = dv_estimate(t, pos, neg);
  CHECK(est.per_sample_T.size() == 50);
  CHECK(std::abs(est.value - (est.joint_term - est.marginal_term)) < 1e-9);
  CHECK(std::abs(per_sample_mi_proxy(est).mean() - est.value) < 1e-9);

  const Eigen::VectorXd joint = t.evaluate(pos.inputs, pos.logits);
  const Eigen::VectorXd marg = t.evaluate(neg.inputs, neg.logits);
  const auto shifted = dv_from_values(joint.array() + 7.25, marg.array() + 7.25, MIKind::kNatural);
  CHECK(std::abs(shifted.value - est.value) < 1e-9);
}

TEST_CASE("stabilized log-mean-exp agrees with the naive form") {
  Eigen::VectorXd v(5);
  v << -3.0, 0.5, 2.0, 10.0, -0.25;
  const double naive = std::log(v.array().exp().mean());
  CHECK(std::abs(log_mean_exp(v) - naive) < 1e-9);
  Eigen::VectorXd big = Eigen::VectorXd::Constant(3, 800.0);
  CHECK(log_mean_exp(big) == doctest::Approx(800.0));
}

TEST_CASE("negatives come from a derangement") {
  Rng rng(3);
  for (int n : {2, 3, 17, 256}) {
    const auto p = rng.derangement(n);
    std::vector<int> seen(p.begin(), p.end());
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < n; ++i) {
      CHECK(seen[static_cast<std::size_t>(i)] == i);
      CHECK(p[static_cast<std::size_t>(i)] != i);
    }
  }
  const auto pos = gaussian_pairs(0.0, 4, rng);
  const std::vector<int> perm{1, 2, 3, 0};
  const auto neg = shuffled_pairs(pos, perm);
  CHECK(neg.inputs == pos.inputs);
  CHECK(neg.logits(0, 0) == pos.logits(1, 0));
}

TEST_CASE("statistic network gradients match central differences") {
  StatisticNetwork t(2, 3, {8, 8}, 4);
  Rng rng(8);
  Eigen::MatrixXd x(5, 2), y(5, 3);
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k < 2; ++k) x(i, k) = rng.normal();
    for (int k = 0; k < 3; ++k) y(i, k) = rng.normal();
  }
  DenseStack::Cache cache;
  const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(5, 0.2, 1.0);
  t.forward(x, y, &cache);
  Eigen::VectorXd dp = Eigen::VectorXd::Zero(t.parameters().size());
  Eigen::MatrixXd dy;
  t.backward(cache, w, &dp, &dy);
  const double h = 1e-6;
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k < 3; ++k) {
      Eigen::MatrixXd up = y, down = y;
      up(i, k) += h;
      down(i, k) -= h;
      const double fd = (w.dot(t.evaluate(x, up)) - w.dot(t.evaluate(x, down))) / (2 * h);
      CHECK(std::abs(fd - dy(i, k)) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
  for (Eigen::Index p = 0; p < dp.size(); p += 7) {
    const double keep = t.parameters()[p];
    t.parameters()[p] = keep + h;
    const double up = w.dot(t.evaluate(x, y));
    t.parameters()[p] = keep - h;
    const double down = w.dot(t.evaluate(x, y));
    t.parameters()[p] = keep;
    CHECK(std::abs((up - down) / (2 * h) - dp[p]) <= 1e-5 * std::max(1.0, std::abs(dp[p])));
  }
}

TEST_CASE("gaussian oracle: strong correlation") {
  const auto est = testing::gaussian_oracle_run(0.9, 1);
  CHECK(std::abs(est.value - gaussian_mi(0.9)) <= 0.1);
  // The proxy histogram is centred on the same value.
  CHECK(std::abs(per_sample_mi_proxy(est).mean() - gaussian_mi(0.9)) <= 0.1);
}

TEST_CASE("gaussian oracle: estimates are non-negative on average") {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) total += testing::gaussian_oracle_run(0.0, 100 + s, 300, 256, 2000).value;
  CHECK(total / 20.0 >= -0.02);
}

TEST_CASE("independent pairs give near-zero estimates from both estimators") {
  MineConfig cfg;
  cfg.hidden = {64, 64};
  DualEstimators est(6, 4, cfg);
  Rng rng(11);
  auto stream = [](Rng& r) {
    MIBatch b;
    const int n = 128;
    b.clean.resize(n, 6);
    b.perturbation.resize(n, 6);
    b.logits.resize(n, 4);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 6; ++k) {
        b.clean(i, k) = r.normal();
        b.perturbation(i, k) = 0.05 * r.normal();
      }
      for (int k = 0; k < 4; ++k) b.logits(i, k) = r.normal();
    }
    b.adversarial = b.clean + b.perturbation;
    return b;
  };
  train_estimators(est, stream, 800, rng);
  double nat = 0.0, adv = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto e = est.estimate(stream(rng), rng);
    nat += e.natural.value / 10.0;
    adv += e.adversarial.value / 10.0;
  }
  CHECK(std::abs(nat) <= 0.05);
  CHECK(std::abs(adv) <= 0.05);
}

TEST_CASE("perturbation-free stream gives a near-zero adversarial estimate") {
  MineConfig cfg;
  cfg.hidden = {64, 64};
  DualEstimators est(6, 4, cfg);
  Rng rng(12);
  auto stream = [](Rng& r) { return testing::null_perturbation_batch(128, r); };
  train_estimators(est, stream, 800, rng);
  double adv = 0.0, nat = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto e = est.estimate(stream(rng), rng);
    adv += e.adversarial.value / 10.0;
    nat += e.natural.value / 10.0;
  }
  CHECK(std::abs(adv) <= 0.05);
  // Logits depend on the clean input, which the natural estimator sees.
  CHECK(nat > 0.2);
  const auto d = decompose_mi(nat, nat, adv);
  CHECK(std::abs(d.residual + adv) < 1e-12);
}

TEST_CASE("discrete channel: deterministic output of a 4-valued perturbation") {
  MineConfig cfg;
  cfg.hidden = {64, 64};
  MineEstimator est(1, 4, cfg, MIKind::kAdversarial);
  Rng rng(13);
  auto batch = [](int n, Rng& r) {
    PairBatch b{Eigen::MatrixXd(n, 1), Eigen::MatrixXd::Zero(n, 4)};
    for (int i = 0; i < n; ++i) {
      const auto v = static_cast<int>(r.index(4));
      b.inputs(i, 0) = v / 3.0;
      b.logits(i, (v * 3 + 1) % 4) = 1.0;  // a fixed bijection of the value
    }
    return b;
  };
  for (int s = 0; s < 1500; ++s) {
    const auto pos = batch(256, rng);
    est.train_step(pos, shuffled_pairs(pos, rng.derangement(256)), nullptr);
  }
  const auto pos = batch(10000, rng);
  const auto e = est.estimate(pos, shuffled_pairs(pos, rng.derangement(10000)));
  CHECK(std::abs(e.value - std::log(4.0)) <= 0.15);
}

TEST_CASE("decomposition residual is small when the additive assumptions hold") {
  // y = x + r + z with x, r, z independent standard normals:
  //   I(x, r; y) = ln(3)/2, I(x; y) = I(r; y) = ln(1.5)/2, residual ~ 0.144.
  auto sample = [](int n, Rng& rng, Eigen::MatrixXd& x, Eigen::MatrixXd& r, Eigen::MatrixXd& y) {
    x.resize(n, 1);
    r.resize(n, 1);
    y.resize(n, 1);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = rng.normal();
      r(i, 0) = rng.normal();
      y(i, 0) = x(i, 0) + r(i, 0) + rng.normal();
    }
  };
  MineConfig cfg;
  MineEstimator total(2, 1, cfg, MIKind::kTotal);
  MineEstimator nat(1, 1, cfg, MIKind::kNatural);
  MineEstimator adv(1, 1, cfg, MIKind::kAdversarial);
  Rng rng(14);
  Eigen::MatrixXd x, r, y;
  auto step = [&](MineEstimator& m, const Eigen::MatrixXd& in, bool train) {
    const PairBatch pos{in, y};
    const auto neg = shuffled_pairs(pos, rng.derangement(static_cast<int>(y.rows())));
    return train ? m.train_step(pos, neg, nullptr) : m.estimate(pos, neg);
  };
  for (int s = 0; s < 1500; ++s) {
    sample(256, rng, x, r, y);
    Eigen::MatrixXd xr(256, 2);
    xr << x, r;
    step(total, xr, true);
    step(nat, x, true);
    step(adv, r, true);
  }
  sample(10000, rng, x, r, y);
  Eigen::MatrixXd xr(10000, 2);
  xr << x, r;
  const auto d = decompose_mi(step(total, xr, false).value, step(nat, x, false).value,
                              step(adv, r, false).value);
  CHECK(std::abs(d.total - 0.5 * std::log(3.0)) <= 0.1);
  CHECK(std::abs(d.residual) < 0.2);
}

TEST_CASE("divergent estimates raise") {
  // With every weight and bias at 10, T = 1610 when y = 1 and 10 when y = -1.
  MineConfig cfg;
  cfg.hidden = {8};
  MineEstimator est(1, 1, cfg, MIKind::kAdversarial);
  est.network().parameters().setConstant(10.0);
  PairBatch pos{Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Constant(4, 1, 1.0)};
  PairBatch neg{Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Constant(4, 1, -1.0)};
  try {
    est.train_step(pos, neg, nullptr);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDivergence);
  }
}

TEST_CASE("sample moments match reference values") {
  const std::vector<double> v{0.3, -1.2, 2.5, 0.7, 0.1, 4.0, -0.5, 1.1, 0.9, 3.3};
  // Reference values: unbiased variance and adjusted Fisher-Pearson skewness
  // from a statistics package.
  CHECK(sample_variance(v) == doctest::Approx(2.766222222222222).epsilon(1e-12));
  CHECK(sample_skewness(v) == doctest::Approx(0.5566748358701655).epsilon(1e-12));
  const std::vector<double> sym{-2, -1, 0, 1, 2};
  CHECK(std::abs(sample_skewness(sym)) < 1e-12);
}

TEST_CASE("summary statistics") {
  Rng rng(21);
  std::vector<double> nat(2000), adv(2000);
  for (auto& x : nat) x = rng.normal();
  for (auto& x : adv) x = 0.5 * rng.normal() + 1.0;

  SUBCASE("symmetric windows have small skew") {
    std::vector<int> a(2000, 0);
    const auto s = summarize(nat, adv, a, a);
    CHECK(std::abs(s.skew_IN) < 0.2);
    CHECK(std::abs(s.skew_IA) < 0.2);
    CHECK(s.var_IN >= 0.0);
    CHECK(s.H_IA == 0.0);
    CHECK(s.f_low == 1.0);
  }
  SUBCASE("all samples in a non-low cluster") {
    std::vector<int> a(2000, 2);
    const auto s = summarize(nat, adv, a, a);
    CHECK(s.H_IN == 0.0);
    CHECK(s.f_low == 0.0);
  }
  SUBCASE("equal thirds give ln 3") {
    std::vector<int> a(2001);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<int>(i % 3);
    std::vector<double> n3(2001, 0.0), a3(2001, 0.0);
    for (std::size_t i = 0; i < a3.size(); ++i) n3[i] = a3[i] = static_cast<double>(i % 7);
    const auto s = summarize(n3, a3, a, a);
    CHECK(std::abs(s.H_IA - std::log(3.0)) < 1e-9);
    CHECK(std::abs(s.f_low - 1.0 / 3.0) < 1e-12);
    CHECK(s.as_vector().size() == 9);
  }
  SUBCASE("short windows are rejected") {
    std::vector<double> few(29, 1.0);
    std::vector<int> a(29, 0);
    try {
      summarize(few, few, a, a);
      FAIL("expected insufficient data");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInsufficientData);
    }
  }
}

TEST_CASE("pooled embedding is mean then max") {
  Points p(3, 3);
  p << 0, 1, 2, 3, -1, 0, 0, 0, 1;
  const auto e = pooled_embedding(p);
  CHECK(e.size() == 6);
  CHECK(e[0] == doctest::Approx(1.0));
  CHECK(e[3] == 3.0);
  CHECK(e[4] == 1.0);
  CHECK(e[5] == 2.0);
}
