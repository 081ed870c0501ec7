#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tempgp/dataset.hpp"
#include "tempgp/error.hpp"

namespace tempgp {

// ---------------------------------------------------------------------------
// Binning

/// Piecewise-constant power curve: the mean response of each speed bin
/// [k w, (k + 1) w). Bins without training rows predict the global mean.
struct BinningModel {
  double bin_width = 0.5;
  std::map<std::int64_t, double> bin_means;
  double fallback = 0.0;

  std::int64_t bin_of(double speed) const {
    if (!(speed >= 0.0)) throw DataError("binning: negative or invalid speed");
    return static_cast<std::int64_t>(std::floor(speed / bin_width));
  }

  /// Sets *used_fallback when the query lands in an empty bin.
  double predict(double speed, bool *used_fallback = nullptr) const {
    const auto it = bin_means.find(bin_of(speed));
    if (used_fallback) *used_fallback = it == bin_means.end();
    return it == bin_means.end() ? fallback : it->second;
  }
};

inline BinningModel fit_binning(std::span<const double> speed, const Eigen::VectorXd &y,
                                double bin_width = 0.5) {
  if (!(bin_width > 0.0)) throw ConfigError("bin width must be positive");
  if (speed.empty()) throw DataError("binning: no training rows");
  if (speed.size() != static_cast<std::size_t>(y.size())) {
    throw std::invalid_argument("binning: speed and response lengths differ");
  }
  BinningModel m;
  m.bin_width = bin_width;
  std::map<std::int64_t, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < speed.size(); ++i) {
    auto &a = acc[m.bin_of(speed[i])];
    a.first += y(static_cast<Eigen::Index>(i));
    ++a.second;
  }
  for (const auto &[k, a] : acc) m.bin_means[k] = a.first / static_cast<double>(a.second);
  m.fallback = y.mean();
  return m;
}

/// Bins on a raw covariate column (wind speed by default).
inline BinningModel fit_binning(const TimeSeriesDataset &data, double bin_width = 0.5,
                                Eigen::Index speed_column = 0) {
  if (speed_column < 0 || speed_column >= data.raw().cols()) {
    throw DataError("binning: speed column out of range");
  }
  const Eigen::VectorXd s = data.raw().col(speed_column);
  return fit_binning(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                     data.y(), bin_width);
}

// ---------------------------------------------------------------------------
// Cross-validation folds

struct CvFold {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

enum class CvKind { RandomKFold, TimeSplit };

struct CvScheme {
  CvKind kind = CvKind::RandomKFold;
  int folds = 5;
  TimeIndex block_size = 1;
  std::uint64_t seed = 1;
};

inline std::vector<CvFold> make_random_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least two folds");
  if (n < folds) throw DataError("fewer rows than folds");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    fold_of[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  std::vector<CvFold> out(static_cast<std::size_t>(folds));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int f = fold_of[static_cast<std::size_t>(i)];
    for (int k = 0; k < folds; ++k) {
      (k == f ? out[static_cast<std::size_t>(k)].test : out[static_cast<std::size_t>(k)].train).push_back(i);
    }
  }
  return out;
}

/// Time-split folds. Rows fall into blocks floor((t - t_min) / block_size);
/// non-empty blocks are shuffled (seeded) and dealt to folds. A fold's
/// training set excludes its test blocks and the blocks immediately before
/// and after each of them, so no training row lies within block_size slots of
/// a test row.
inline std::vector<CvFold> make_time_split_folds(const TimeSeriesDataset &data,
                                                 TimeIndex block_size, int folds,
                                                 std::uint64_t seed = 1) {
  if (folds < 2) throw ConfigError("cross-validation needs at least two folds");
  if (block_size < 1) throw ConfigError("block size must be at least 1");
  if (data.size() < static_cast<Eigen::Index>(folds) * block_size) {
    throw DataError("time-split CV needs N >= folds * block_size");
  }
  const auto &t = data.t();
  const TimeIndex t0 = t.front();
  std::vector<TimeIndex> block(t.size());
  std::vector<TimeIndex> blocks;
  for (std::size_t i = 0; i < t.size(); ++i) {
    block[i] = (t[i] - t0) / block_size;
    if (blocks.empty() || blocks.back() != block[i]) blocks.push_back(block[i]);
  }
  if (blocks.size() < static_cast<std::size_t>(folds)) {
    throw DataError("time-split CV: only " + std::to_string(blocks.size()) +
                    " non-empty blocks for " + std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::map<TimeIndex, int> fold_of_block;
  for (std::size_t i = 0; i < order.size(); ++i) {
    fold_of_block[blocks[order[i]]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }

  std::vector<CvFold> out(static_cast<std::size_t>(folds));
  auto fold_at = [&](TimeIndex b) {
    const auto it = fold_of_block.find(b);
    return it == fold_of_block.end() ? -1 : it->second;
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    const TimeIndex b = block[i];
    const int own = fold_at(b);
    const int before = fold_at(b - 1);
    const int after = fold_at(b + 1);
    for (int k = 0; k < folds; ++k) {
      auto &f = out[static_cast<std::size_t>(k)];
      const auto row = static_cast<Eigen::Index>(i);
      if (own == k) f.test.push_back(row);
      else if (before != k && after != k) f.train.push_back(row);
    }
  }
  return out;
}

inline std::vector<CvFold> make_folds(const TimeSeriesDataset &data, const CvScheme &scheme) {
  return scheme.kind == CvKind::TimeSplit
             ? make_time_split_folds(data, scheme.block_size, scheme.folds, scheme.seed)
             : make_random_folds(data.size(), scheme.folds, scheme.seed);
}

// ---------------------------------------------------------------------------
// k nearest neighbors

namespace detail {

// Indices of the `count` nearest rows of X[:, features] to `query`, ordered by
// (distance, row index).
inline std::vector<Eigen::Index> nearest_rows(const Eigen::MatrixXd &X,
                                              std::span<const Eigen::Index> rows,
                                              std::span<const Eigen::Index> features,
                                              const Eigen::Ref<const Eigen::RowVectorXd> &query,
                                              std::size_t count) {
  std::vector<std::pair<double, Eigen::Index>> dist(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double s = 0.0;
    for (std::size_t f = 0; f < features.size(); ++f) {
      const double z = X(rows[r], features[f]) - query(static_cast<Eigen::Index>(f));
      s += z * z;
    }
    dist[r] = {s, rows[r]};
  }
  count = std::min(count, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(count), dist.end());
  std::vector<Eigen::Index> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = dist[i].second;
  return out;
}

}  // namespace detail

struct KnnModel {
  int k = 1;
  std::vector<Eigen::Index> selected_features;
  Eigen::MatrixXd X;  // training rows restricted to selected_features
  Eigen::VectorXd y;
  Eigen::Index input_dim = 0;  // width of the full covariate vector

  /// x is a full model-space covariate vector; only the selected features
  /// are used.
  double predict(const Eigen::Ref<const Eigen::VectorXd> &x) const {
    if (x.size() != input_dim) throw std::invalid_argument("knn: dimension mismatch");
    Eigen::RowVectorXd q(static_cast<Eigen::Index>(selected_features.size()));
    for (std::size_t f = 0; f < selected_features.size(); ++f) {
      q(static_cast<Eigen::Index>(f)) = x(selected_features[f]);
    }
    return predict_selected(q);
  }

  /// Query already restricted to the selected features.
  double predict_selected(const Eigen::Ref<const Eigen::RowVectorXd> &q) const {
    if (q.size() != X.cols()) throw std::invalid_argument("knn: dimension mismatch");
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(X.rows()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(X.cols()));
    std::iota(cols.begin(), cols.end(), Eigen::Index{0});
    const auto nn = detail::nearest_rows(X, rows, cols, q, static_cast<std::size_t>(k));
    double s = 0.0;
    for (auto i : nn) s += y(i);
    return s / static_cast<double>(nn.size());
  }
};

struct SubsetScore {
  double rmse = std::numeric_limits<double>::infinity();
  int k = 0;
};

/// CV RMSE of kNN on a feature subset for every k in the grid at once
/// (cumulative sums over the sorted neighbor list). k values larger than a
/// fold's training set are scored as infinite.
inline std::vector<double> cv_rmse_knn(const TimeSeriesDataset &data,
                                       std::span<const Eigen::Index> features,
                                       const std::vector<CvFold> &folds,
                                       const std::vector<int> &k_grid) {
  if (k_grid.empty()) throw ConfigError("k grid is empty");
  const int k_max = *std::max_element(k_grid.begin(), k_grid.end());
  const auto nk = k_grid.size();
  std::vector<double> sse(nk, 0.0);
  std::vector<bool> feasible(nk, true);
  std::size_t count = 0;
  for (const auto &fold : folds) {
    if (fold.train.empty() || fold.test.empty()) {
      throw DataError("degenerate cross-validation fold (empty train or test set)");
    }
    for (std::size_t j = 0; j < nk; ++j) {
      if (static_cast<std::size_t>(k_grid[j]) > fold.train.size()) feasible[j] = false;
    }
    std::vector<std::vector<double>> err(fold.test.size(), std::vector<double>(nk, 0.0));
    const auto ntest = static_cast<long>(fold.test.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long r = 0; r < ntest; ++r) {
      const auto row = fold.test[static_cast<std::size_t>(r)];
      Eigen::RowVectorXd q(static_cast<Eigen::Index>(features.size()));
      for (std::size_t f = 0; f < features.size(); ++f) {
        q(static_cast<Eigen::Index>(f)) = data.X()(row, features[f]);
      }
      const auto nn = detail::nearest_rows(data.X(), fold.train, features, q,
                                           static_cast<std::size_t>(k_max));
      double cum = 0.0;
      std::size_t used = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k_grid[j]), nn.size());
        // k_grid need not be sorted; recompute from scratch when it goes down.
        if (kk < used) {
          cum = 0.0;
          used = 0;
        }
        for (; used < kk; ++used) cum += data.y()(nn[used]);
        const double e = cum / static_cast<double>(kk) - data.y()(row);
        err[static_cast<std::size_t>(r)][j] = e * e;
      }
    }
    for (const auto &e : err) {
      for (std::size_t j = 0; j < nk; ++j) sse[j] += e[j];
    }
    count += fold.test.size();
  }
  std::vector<double> out(nk);
  for (std::size_t j = 0; j < nk; ++j) {
    out[j] = feasible[j] ? std::sqrt(sse[j] / static_cast<double>(count))
                         : std::numeric_limits<double>::infinity();
  }
  return out;
}

struct KnnSelectionStep {
  std::vector<Eigen::Index> features;
  SubsetScore score;
};

struct KnnFit {
  KnnModel model;
  std::vector<KnnSelectionStep> path;  // accepted steps, CV RMSE non-increasing
};

/// Greedy forward selection over covariates with k tuned jointly on the CV
/// RMSE. A candidate is accepted only if it strictly improves the best CV
/// RMSE; ties go to the lower covariate index, then the smaller k.
inline KnnFit fit_knn(const TimeSeriesDataset &data, const CvScheme &scheme,
                      std::vector<int> k_grid = {5, 10, 20, 50, 100, 200, 400}) {
  if (k_grid.empty()) throw ConfigError("k grid is empty");
  for (int k : k_grid) {
    if (k < 1) throw ConfigError("k values must be positive");
  }
  const auto folds = make_folds(data, scheme);
  std::vector<Eigen::Index> selected;
  SubsetScore best;
  KnnFit fit;
  for (;;) {
    SubsetScore round_best;
    Eigen::Index round_feature = -1;
    for (Eigen::Index c = 0; c < data.dim(); ++c) {
      if (std::find(selected.begin(), selected.end(), c) != selected.end()) continue;
      auto trial = selected;
      trial.push_back(c);
      const auto scores = cv_rmse_knn(data, trial, folds, k_grid);
      SubsetScore s;
      for (std::size_t j = 0; j < k_grid.size(); ++j) {
        if (scores[j] < s.rmse || (scores[j] == s.rmse && k_grid[j] < s.k)) {
          s = {scores[j], k_grid[j]};
        }
      }
      if (s.rmse < round_best.rmse) {
        round_best = s;
        round_feature = c;
      }
    }
    if (round_feature < 0 || !(round_best.rmse < best.rmse)) break;
    selected.push_back(round_feature);
    best = round_best;
    fit.path.push_back({selected, best});
  }
  if (selected.empty()) throw DataError("kNN selection found no usable feature");

  KnnModel &m = fit.model;
  m.k = std::min<int>(best.k, static_cast<int>(data.size()));
  m.selected_features = selected;
  m.X.resize(data.size(), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t f = 0; f < selected.size(); ++f) {
    m.X.col(static_cast<Eigen::Index>(f)) = data.X().col(selected[f]);
  }
  m.y = data.y();
  m.input_dim = data.dim();
  return fit;
}

/// kNN on a fixed feature set and k, no selection.
inline KnnModel make_knn(const TimeSeriesDataset &data, std::vector<Eigen::Index> features, int k) {
  if (k < 1 || k > data.size()) throw ConfigError("k must lie in [1, N]");
  if (features.empty()) throw ConfigError("kNN needs at least one feature");
  KnnModel m;
  m.k = k;
  m.selected_features = std::move(features);
  m.X.resize(data.size(), static_cast<Eigen::Index>(m.selected_features.size()));
  for (std::size_t f = 0; f < m.selected_features.size(); ++f) {
    const auto c = m.selected_features[f];
    if (c < 0 || c >= data.dim()) throw ConfigError("kNN feature index out of range");
    m.X.col(static_cast<Eigen::Index>(f)) = data.X().col(c);
  }
  m.y = data.y();
  m.input_dim = data.dim();
  return m;
}

}  // namespace tempgp
