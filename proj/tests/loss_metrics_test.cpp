#include <gtest/gtest.h>

#include <cmath>

#include "dualmod/gradcheck.hpp"
#include "dualmod/loss_metrics.hpp"
#include "dualmod/rng.hpp"
#include "dualmod/selfcheck.hpp"

using namespace dualmod;

namespace {
Tensor rand_density(Rng& rng, std::size_t h, std::size_t w, double hi = 0.4) {
  Tensor t(Shape{1, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, hi);
  return t;
}
}  // namespace

TEST(BayesianLoss, SingleAnnotationIsCountGap) {
  Rng rng(3);
  Tensor d = rand_density(rng, 5, 5);
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) sum += d[i];
  std::vector<Point> one{{17.0, 23.0}};
  EXPECT_NEAR(bayesian_loss(d, one, 8.0, 8)[0], std::abs(1.0 - sum), 1e-12);

  // density summing to exactly 1 -> loss 0
  Tensor unit(Shape{1, 2, 2}, 0.25);
  EXPECT_NEAR(bayesian_loss(unit, one, 8.0, 8)[0], 0.0, 1e-15);
}

TEST(BayesianLoss, EmptySceneCases) {
  Rng rng(5);
  Tensor d = rand_density(rng, 3, 3);
  EXPECT_EQ(bayesian_loss(d, {}, 8.0, 8)[0], 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) sum += d[i];
  EXPECT_NEAR(bayesian_loss(d, {}, 8.0, 8, 0.5)[0], 0.5 * sum, 1e-12);
}

TEST(BayesianLoss, FarSeparatedUnitMasses) {
  Tensor d(Shape{1, 8, 8}, 0.0);
  d(0, 1, 1) = 1.0;  // cell center (12, 12)
  d(0, 6, 6) = 1.0;  // cell center (52, 52)
  std::vector<Point> pts{{12.0, 12.0}, {52.0, 52.0}};
  EXPECT_LT(bayesian_loss(d, pts, 6.0, 8)[0], 1e-6);
}

TEST(BayesianLoss, PosteriorColumnsSumToOne) {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t h = 2 + rng.uniform_int(5), w = 2 + rng.uniform_int(5);
    const int m = 1 + static_cast<int>(rng.uniform_int(5));
    std::vector<Point> pts;
    for (int i = 0; i < m; ++i) pts.push_back({rng.uniform(0, w * 8.0), rng.uniform(0, h * 8.0)});
    auto p = posterior_weights(h, w, 8, pts, 8.0);
    for (std::size_t cell = 0; cell < h * w; ++cell) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += p[i * h * w + cell];
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(BayesianLoss, NonnegativeAndZeroIffPerfect) {
  Rng rng(9);
  Tensor d = rand_density(rng, 4, 4);
  std::vector<Point> pts{{10.0, 10.0}, {25.0, 20.0}};
  EXPECT_GE(bayesian_loss(d, pts, 8.0, 8)[0], 0.0);
  // construct a density with expected count exactly 1 per annotation:
  // two far-apart points, unit mass at each
  Tensor exact(Shape{1, 8, 8}, 0.0);
  exact(0, 0, 0) = 1.0;
  exact(0, 7, 7) = 1.0;
  std::vector<Point> far{{4.0, 4.0}, {60.0, 60.0}};
  EXPECT_LT(bayesian_loss(exact, far, 4.0, 8)[0], 1e-12);
}

TEST(BayesianLoss, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  Parameter d("density", rand_density(rng, 6, 6));
  std::vector<Point> pts{{9.5, 14.0}, {30.0, 38.5}, {44.0, 12.0}};
  auto f = [&]() { return bayesian_loss(d.value(), pts, 8.0, 8); };
  // the loss is piecewise linear in the density; random points avoid kinks,
  // and the per-cell derivative tolerance is 1e-6
  GradCheckResult r = finite_diff_check(f, {d}, 1e-5, 1e-6, 1e-8);
  EXPECT_TRUE(r.pass) << r.worst;
}

TEST(BayesianLoss, ConfigErrors) {
  Tensor d(Shape{1, 2, 2}, 0.1);
  EXPECT_THROW(bayesian_loss(d, {{1, 1}}, 0.0, 8), ConfigError);
  EXPECT_THROW(bayesian_loss(d, {{1, 1}}, -2.0, 8), ConfigError);
}

TEST(Game, PerfectPredictionZeroAtAllLevels) {
  Tensor d(Shape{1, 4, 4}, 0.0);
  std::vector<Point> pts;
  // unit masses exactly at three cell centers
  for (auto [r, c] : {std::pair{0, 1}, {2, 3}, {3, 0}}) {
    d(0, r, c) = 1.0;
    pts.push_back({(c + 0.5) * 8.0, (r + 0.5) * 8.0});
  }
  DensityMap dm{d, 8};
  for (int l = 0; l < 4; ++l) EXPECT_NEAR(game_level(dm, 32, 32, pts, l), 0.0, 1e-12);
}

TEST(Game, QuadrantHandExample) {
  DensityMap dm{Tensor(Shape{1, 2, 2}, std::vector<double>{2, 0, 1, 1}), 2};
  std::vector<Point> pts{{1, 1}, {3, 1}, {1, 3}, {3, 3}};
  EXPECT_DOUBLE_EQ(game_level(dm, 4, 4, pts, 1), 2.0);
  EXPECT_DOUBLE_EQ(game_level(dm, 4, 4, pts, 0), 0.0);
}

TEST(Game, MatchesBruteForceOracle) {
  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const int f = rng.uniform() < 0.5 ? 4 : 8;
    const std::size_t h = 2 + rng.uniform_int(7), w = 2 + rng.uniform_int(7);
    const int height = static_cast<int>(h) * f - static_cast<int>(rng.uniform_int(f));
    const int width = static_cast<int>(w) * f - static_cast<int>(rng.uniform_int(f));
    DensityMap dm{rand_density(rng, h, w), f};
    std::vector<Point> pts;
    const std::size_t n_pts = rng.uniform_int(8);
    for (std::size_t i = 0; i < n_pts; ++i)
      pts.push_back({rng.uniform(0.0, width), rng.uniform(0.0, height)});
    double prev = 0.0;
    for (int l = 0; l < 4; ++l) {
      const double got = game_level(dm, width, height, pts, l);
      EXPECT_NEAR(got, game_bruteforce(dm, width, height, pts, l), 1e-9);
      if (l > 0) EXPECT_GE(got, prev - 1e-12);  // refinement cannot reduce error
      prev = got;
    }
  }
}

TEST(Game, BoundaryPointBelongsToHigherRegion) {
  // point exactly on the level-1 boundary of a 4x4 image
  DensityMap dm{Tensor(Shape{1, 2, 2}, 0.0), 2};
  std::vector<Point> pts{{2.0, 0.0}};  // x = W/2 boundary
  // the point must land in the right half: error in region (0,1) only
  EXPECT_DOUBLE_EQ(game_level(dm, 4, 4, pts, 1), 1.0);
  std::vector<Point> left{{1.9, 0.0}};
  EXPECT_DOUBLE_EQ(game_level(dm, 4, 4, left, 1), 1.0);
  EXPECT_THROW(game_level(dm, 4, 4, pts, -1), ConfigError);
  EXPECT_THROW(game_level(dm, 4, 4, pts, 4), ConfigError);
}

TEST(Rmse, HandValues) {
  EXPECT_DOUBLE_EQ(rmse({3.0}, {0.0}), 3.0);
  EXPECT_DOUBLE_EQ(rmse({5.0, 2.0}, {5.0, 2.0}), 0.0);
  EXPECT_NEAR(rmse({3.0, 4.0}, {0.0, 0.0}), std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(rmse({3.0, 4.0}, {0.0, 0.0}), 3.535534, 1e-6);
  EXPECT_THROW(rmse({}, {}), ConfigError);
  EXPECT_THROW(rmse({1.0}, {1.0, 2.0}), ConfigError);
}

TEST(Aggregate, ReportInvariants) {
  Rng rng(17);
  std::vector<ImageEval> evals;
  for (int i = 0; i < 10; ++i) {
    ImageEval e;
    e.id = "img" + std::to_string(i);
    e.count_gt = static_cast<double>(rng.uniform_int(20));
    e.count_pred = e.count_gt + rng.uniform(-3, 3);
    e.game[0] = std::abs(e.count_pred - e.count_gt);
    for (int l = 1; l < 4; ++l) e.game[l] = e.game[l - 1] + rng.uniform(0, 1);
    evals.push_back(e);
  }
  MetricReport rep = aggregate_evals(evals);
  EXPECT_NEAR(rep.game[0], rep.mae, 1e-9);
  for (int l = 0; l < 3; ++l) EXPECT_LE(rep.game[l], rep.game[l + 1] + 1e-12);
  EXPECT_GE(rep.rmse, rep.mae - 1e-12);
  EXPECT_THROW(aggregate_evals({}), ConfigError);
}

TEST(MetricSuite, SelfcheckOracles) {
  Rng rng(19);
  for (const auto& r : run_metric_checks(rng)) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}
