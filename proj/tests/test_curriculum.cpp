#include "pcrobust/curriculum.hpp"
#include "pcrobust/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace pcr;

namespace {

MISummaryStats typical_stats() {
  MISummaryStats s;
  s.mean_IN = 0.8;
  s.mean_IA = 0.1;
  s.var_IN = 0.05;
  s.var_IA = 0.02;
  s.skew_IN = 0.3;
  s.skew_IA = -0.4;
  s.f_low = 0.3;
  s.H_IN = 1.0;
  s.H_IA = 0.9;
  return s;
}

AdvisorConfig advisor_config() {
  AdvisorConfig c;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("k-means recovers three well separated groups") {
  const std::vector<double> x{0, 0, 0, 1, 1, 1, 2, 2, 2};
  const auto c = fit_clusters(x, 1);
  CHECK(c.centroids[0] == doctest::Approx(0.0));
  CHECK(c.centroids[1] == doctest::Approx(1.0));
  CHECK(c.centroids[2] == doctest::Approx(2.0));
  for (double f : c.frequencies) CHECK(f == doctest::Approx(1.0 / 3.0));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(c.assignments[i] == static_cast<int>(x[i]));
}

TEST_CASE("k-means matches a reference implementation") {
  // Reference centroids from a standard k-means (k=3, 10 restarts).
  const std::vector<double> x{0.05, 0.1, 0.0, 1.9, 2.1, 2.0, 5.2, 4.8, 5.0, 5.1, 0.02, 2.05};
  const auto c = fit_clusters(x, 7);
  CHECK(c.centroids[0] == doctest::Approx(0.0425).epsilon(1e-12));
  CHECK(c.centroids[1] == doctest::Approx(2.0125).epsilon(1e-12));
  CHECK(c.centroids[2] == doctest::Approx(5.025).epsilon(1e-12));
  CHECK(c.frequencies[0] == doctest::Approx(4.0 / 12.0));
}

TEST_CASE("k-means restarts are stable across seeds") {
  const std::vector<double> x{0.05, 0.1, 0.0, 1.9, 2.1, 2.0, 5.2, 4.8, 5.0, 5.1, 0.02, 2.05};
  const auto a = fit_clusters(x, 1);
  for (std::uint64_t s = 2; s < 12; ++s) {
    const auto b = fit_clusters(x, s);
    for (int j = 0; j < kNumMIClusters; ++j) CHECK(b.centroids[j] == doctest::Approx(a.centroids[j]));
  }
}

TEST_CASE("k-means rejects degenerate input") {
  const std::vector<double> same(20, 0.4);
  try {
    fit_clusters(same, 1);
    FAIL("expected a degenerate-input error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerate);
  }
  const std::vector<double> two{0.0, 1.0, 0.0, 1.0};
  CHECK_THROWS_AS(fit_clusters(two, 1), Error);
  const std::vector<double> bad{0.0, 1.0, std::nan(""), 2.0};
  CHECK_THROWS_AS(fit_clusters(bad, 1), Error);
}

TEST_CASE("cluster entropy closed forms") {
  const std::array<double, 3> point{1.0, 0.0, 0.0};
  const std::array<double, 3> thirds{1.0 / 3, 1.0 / 3, 1.0 / 3};
  const std::array<double, 3> halves{0.5, 0.5, 0.0};
  CHECK(entropy_of(point) == 0.0);
  CHECK(entropy_of(thirds) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(entropy_of(halves) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("entropy is maximal at the uniform split") {
  double best = -1.0;
  std::array<double, 3> arg{};
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; i + j <= 20; ++j) {
      const std::array<double, 3> p{i / 20.0, j / 20.0, (20 - i - j) / 20.0};
      const double h = entropy_of(p);
      CHECK(h <= std::log(3.0) + 1e-12);
      if (h > best) {
        best = h;
        arg = p;
      }
    }
  }
  // 0.05 grid: the nearest points to uniform are permutations of (.35, .35, .30).
  for (double p : arg) CHECK(std::abs(p - 1.0 / 3.0) < 0.05);
}

TEST_CASE("adaptive lambda closed forms") {
  CHECK(adaptive_lambda(1.0, 0.7, 1.0, 1.0) == 0.0);
  CHECK(adaptive_lambda(0.0, 0.0, 2.5, 1.0) == 2.5);
  CHECK(adaptive_lambda(0.5, std::log(3.0), 2.0, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // Larger entropy shrinks the weight.
  CHECK(adaptive_lambda(0.2, 1.0, 1.0, 1.0) < adaptive_lambda(0.2, 0.5, 1.0, 1.0));
}

TEST_CASE("anchor schedule ramps then holds") {
  CHECK(anchor_target(0, 100, 0.6) == 0.0);
  CHECK(anchor_target(30, 100, 0.6) == doctest::Approx(0.5));
  CHECK(anchor_target(60, 100, 0.6) == doctest::Approx(1.0));
  CHECK(anchor_target(99, 100, 0.6) == 1.0);
}

TEST_CASE("advisor config validation") {
  AdvisorConfig c;
  CHECK_NOTHROW(c.validate());
  c.window = 10;
  CHECK_THROWS_AS(c.validate(), Error);
  c = AdvisorConfig{};
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = AdvisorConfig{};
  c.anchor_warmup_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("fresh advisor emits one half") {
  const CurriculumAdvisor adv(advisor_config());
  CHECK(adv.eta(typical_stats()) == 0.5);
  const auto sig = adv.advise(typical_stats(), 12);
  CHECK(sig.step == 12);
  CHECK(sig.f_low == 0.3);
  CHECK(sig.entropy_term == 0.9);
  CHECK(sig.lambda_adaptive == doctest::Approx(0.7 * std::exp(-0.9)));
}

TEST_CASE("advisor output stays inside the unit interval") {
  CurriculumAdvisor adv(advisor_config());
  adv.parameters() *= 50.0;
  for (double m : {-100.0, -1.0, 0.0, 1.0, 100.0}) {
    auto s = typical_stats();
    s.mean_IA = m;
    s.skew_IN = -m;
    const double eta = adv.eta(s);
    CHECK(eta >= 0.0);
    CHECK(eta <= 1.0);
  }
}

TEST_CASE("non-finite statistics are rejected") {
  const CurriculumAdvisor adv(advisor_config());
  auto s = typical_stats();
  s.var_IA = std::nan("");
  try {
    adv.advise(s, 0);
    FAIL("expected a configuration error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
}

TEST_CASE("zero learning rate leaves the advisor unchanged") {
  auto cfg = advisor_config();
  cfg.learning_rate = 0.0;
  CurriculumAdvisor adv(cfg);
  const Eigen::VectorXd before = adv.parameters();
  for (int i = 0; i < 10; ++i) adv.update(typical_stats(), {1.0, 0.8});
  CHECK(adv.parameters() == before);
}

TEST_CASE("a heavy anchor makes eta track the target") {
  auto cfg = advisor_config();
  cfg.anchor_weight = 1e6;
  CurriculumAdvisor adv(cfg);
  for (int i = 0; i < 200; ++i) adv.update(typical_stats(), {2.0, 0.8});
  CHECK(std::abs(adv.eta(typical_stats()) - 0.8) <= 0.01);
}

TEST_CASE("without the anchor eta collapses toward zero") {
  auto cfg = advisor_config();
  cfg.anchor_weight = 0.0;
  CurriculumAdvisor adv(cfg);
  double prev = adv.eta(typical_stats());
  for (int i = 0; i < 100; ++i) {
    // Zero adversarial loss: eta multiplies 0 plus the (non-negative) MI term.
    adv.update(typical_stats(), {0.5, 0.9});
    const double now = adv.eta(typical_stats());
    CHECK(now <= prev + 1e-12);
    prev = now;
  }
  CHECK(prev < 0.5);
}

TEST_CASE("default anchor weight tracks the ramp over a run") {
  CurriculumAdvisor adv(advisor_config());
  const int steps = 400;
  double gap = 0.0;
  for (int t = 0; t < steps; ++t) {
    auto s = typical_stats();
    s.mean_IA = 0.1 + 0.001 * t;  // drifting statistics
    const double target = anchor_target(t, steps, 0.6);
    gap += std::abs(adv.eta(s) - target) / steps;
    adv.update(s, {0.7, target});
  }
  CHECK(gap < 0.15);
}

TEST_CASE("exploding advisor gradient falls back to the schedule") {
  CurriculumAdvisor adv(advisor_config());
  CHECK_FALSE(adv.fallen_back());
  try {
    adv.update(typical_stats(), {1e6, 0.5});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDivergence);
  }
  CHECK(adv.fallen_back());
}

TEST_CASE("advisor training is deterministic") {
  CurriculumAdvisor a(advisor_config()), b(advisor_config());
  for (int i = 0; i < 50; ++i) {
    a.update(typical_stats(), {0.4, i / 50.0});
    b.update(typical_stats(), {0.4, i / 50.0});
  }
  CHECK(a.parameters() == b.parameters());
}
