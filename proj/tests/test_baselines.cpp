#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "support.hpp"
#include "tempgp/baselines.hpp"

using namespace tempgp;

namespace {

std::span<const double> as_span(const std::vector<double> &v) { return {v.data(), v.size()}; }

TimeSeriesDataset dataset_with_times(const std::vector<TimeIndex> &t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  return {y, Eigen::MatrixXd(y), t, {"x"}};
}

}  // namespace

TEST(Binning, BinMeansAndFallback) {
  const std::vector<double> speed{0.1, 0.2, 1.3};
  Eigen::VectorXd y(3);
  y << 10, 20, 60;
  const auto m = fit_binning(as_span(speed), y, 0.5);
  EXPECT_DOUBLE_EQ(m.bin_means.at(0), 15.0);
  EXPECT_DOUBLE_EQ(m.predict(0.45), 15.0);
  bool fb = false;
  EXPECT_DOUBLE_EQ(m.predict(7.0, &fb), 30.0);
  EXPECT_TRUE(fb);
  m.predict(1.0, &fb);
  EXPECT_FALSE(fb);
  EXPECT_THROW(m.predict(-0.1), DataError);
}

TEST(Binning, ExactForBinConstantFunctions) {
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::vector<double> speed(500);
  Eigen::VectorXd y(500);
  auto curve = [](double s) { return std::floor(s / 0.5) * 3.0 + 1.0; };
  for (std::size_t i = 0; i < speed.size(); ++i) {
    speed[i] = u(rng);
    y(static_cast<Eigen::Index>(i)) = curve(speed[i]);
  }
  const auto m = fit_binning(as_span(speed), y);
  for (std::size_t i = 0; i < speed.size(); ++i) EXPECT_DOUBLE_EQ(m.predict(speed[i]), curve(speed[i]));
}

TEST(Binning, PiecewiseConstant) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 15.0);
  std::vector<double> speed(300);
  Eigen::VectorXd y(300);
  for (std::size_t i = 0; i < speed.size(); ++i) {
    speed[i] = u(rng);
    y(static_cast<Eigen::Index>(i)) = speed[i] * speed[i] + u(rng);
  }
  const auto m = fit_binning(as_span(speed), y);
  for (int rep = 0; rep < 100; ++rep) {
    const double k = std::floor(u(rng) / 0.5);
    std::uniform_real_distribution<double> in(k * 0.5, k * 0.5 + 0.4999);
    EXPECT_EQ(m.predict(in(rng)), m.predict(in(rng)));
  }
}

TEST(Binning, UsesRawColumnOfDataset) {
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  Eigen::MatrixXd X(4, 2);
  X << 0, 0.1, 0, 0.2, 0, 0.9, 0, 1.1;
  const TimeSeriesDataset d(y, X, {0, 1, 2, 3}, {"a", "speed"});
  const auto m = fit_binning(d, 0.5, 1);
  EXPECT_DOUBLE_EQ(m.predict(0.3), 1.5);
  EXPECT_DOUBLE_EQ(m.predict(0.6), 3.0);
  EXPECT_DOUBLE_EQ(m.predict(1.2), 4.0);
  EXPECT_THROW(fit_binning(d, 0.5, 2), DataError);
  EXPECT_THROW(fit_binning(as_span({}), Eigen::VectorXd(), 0.5), DataError);
}

TEST(Knn, OneNeighborAndGlobalMean) {
  std::mt19937_64 rng(52);
  const auto data = testkit::random_dataset(30, 2, rng);
  const auto one = make_knn(data, {0, 1}, 1);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    EXPECT_DOUBLE_EQ(one.predict(data.X().row(i).transpose()), data.y()(i));
  }
  const auto all = make_knn(data, {1}, 30);
  EXPECT_NEAR(all.predict(Eigen::Vector2d(5, -5)), data.y().mean(), 1e-12);
  EXPECT_NEAR(all.predict(Eigen::Vector2d(0, 0)), data.y().mean(), 1e-12);
}

TEST(Knn, HandComputedDistances) {
  Eigen::VectorXd y(5);
  y << 10, 20, 30, 40, 50;
  Eigen::MatrixXd X(5, 2);
  X << 0, 0, 1, 0, 0, 2, 3, 3, -1, -1;
  const TimeSeriesDataset d(y, X, {0, 1, 2, 3, 4}, {"a", "b"});
  // Query (0.4, 0): squared distances 0.16, 0.36, 4.16, 15.76, 2.96.
  const auto m = make_knn(d, {0, 1}, 3);
  EXPECT_DOUBLE_EQ(m.predict(Eigen::Vector2d(0.4, 0.0)), (10 + 20 + 50) / 3.0);
  // Only feature b: distances to 0.5 are 0.25, 0.25, 2.25, 6.25, 2.25; ties by row order.
  const auto mb = make_knn(d, {1}, 3);
  EXPECT_DOUBLE_EQ(mb.predict(Eigen::Vector2d(100.0, 0.5)), (10 + 20 + 30) / 3.0);
}

TEST(Knn, PermutationInvariant) {
  std::mt19937_64 rng(53);
  const auto data = testkit::random_dataset(60, 3, rng);
  std::vector<Eigen::Index> perm(60);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  // Same rows in a different order; times stay sorted.
  const TimeSeriesDataset shuffled(data.y()(perm), data.X()(perm, Eigen::all), data.t(),
                                   data.covariate_names());
  const auto a = make_knn(data, {0, 2}, 7);
  const auto b = make_knn(shuffled, {0, 2}, 7);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Vector3d q(normal(rng), normal(rng), normal(rng));
    EXPECT_NEAR(a.predict(q), b.predict(q), 1e-12);
  }
}

TEST(Knn, ForwardSelectionFindsTheSignalCovariate) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 500);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index n = 2000;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < 3; ++j) X(i, j) = normal(rng);
      y(i) = 3.0 * std::sin(X(i, 0)) + 0.2 * normal(rng);
    }
    std::vector<TimeIndex> t(static_cast<std::size_t>(n));
    std::iota(t.begin(), t.end(), TimeIndex{0});
    const TimeSeriesDataset d(y, X, t, {"a", "b", "c"});
    CvScheme scheme;
    scheme.seed = seed;
    const auto fit = fit_knn(d, scheme);
    hits += fit.model.selected_features == std::vector<Eigen::Index>{0};
    for (std::size_t s = 1; s < fit.path.size(); ++s) {
      EXPECT_LE(fit.path[s].score.rmse, fit.path[s - 1].score.rmse);
    }
  }
  EXPECT_GE(hits, 9);
}

TEST(Folds, RandomFoldsPartitionRows) {
  const auto folds = make_random_folds(23, 5, 7);
  std::multiset<Eigen::Index> tested;
  for (const auto &f : folds) {
    tested.insert(f.test.begin(), f.test.end());
    EXPECT_EQ(f.train.size() + f.test.size(), 23u);
  }
  EXPECT_EQ(tested.size(), 23u);
  EXPECT_EQ(std::set<Eigen::Index>(tested.begin(), tested.end()).size(), 23u);
  EXPECT_EQ(make_random_folds(23, 5, 7)[2].test, folds[2].test);
  EXPECT_THROW(make_random_folds(23, 1, 7), ConfigError);
}

TEST(Folds, TenBlocksFiveFoldsExcludeNeighbors) {
  std::vector<TimeIndex> t(40);
  std::iota(t.begin(), t.end(), TimeIndex{0});
  const auto data = dataset_with_times(t);
  const auto folds = make_time_split_folds(data, 4, 5, 3);
  for (const auto &f : folds) {
    std::set<TimeIndex> test_blocks, train_blocks;
    for (auto i : f.test) test_blocks.insert(t[static_cast<std::size_t>(i)] / 4);
    for (auto i : f.train) train_blocks.insert(t[static_cast<std::size_t>(i)] / 4);
    EXPECT_EQ(test_blocks.size(), 2u);
    for (auto b : test_blocks) {
      EXPECT_FALSE(train_blocks.count(b));
      EXPECT_FALSE(train_blocks.count(b - 1));
      EXPECT_FALSE(train_blocks.count(b + 1));
    }
    // Every other block is used for training.
    for (TimeIndex b = 0; b < 10; ++b) {
      const bool near = test_blocks.count(b) || test_blocks.count(b - 1) || test_blocks.count(b + 1);
      EXPECT_EQ(train_blocks.count(b) == 1, !near);
    }
  }
}

TEST(Folds, LeaveOneOutWithBuffer) {
  std::vector<TimeIndex> t(12);
  std::iota(t.begin(), t.end(), TimeIndex{0});
  const auto folds = make_time_split_folds(dataset_with_times(t), 1, 12, 5);
  for (const auto &f : folds) {
    ASSERT_EQ(f.test.size(), 1u);
    const auto i = f.test[0];
    const std::size_t expected = 12 - 1 - (i > 0) - (i < 11);
    EXPECT_EQ(f.train.size(), expected);
    for (auto j : f.train) EXPECT_GT(std::abs(j - i), 1);
  }
}

TEST(Folds, TooFewBlocks) {
  std::vector<TimeIndex> t(10);
  std::iota(t.begin(), t.end(), TimeIndex{0});
  EXPECT_THROW(make_time_split_folds(dataset_with_times(t), 4, 5), DataError);
  EXPECT_THROW(make_time_split_folds(dataset_with_times(t), 0, 2), ConfigError);
}
