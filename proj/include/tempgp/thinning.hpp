#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempgp/dataset.hpp"
#include "tempgp/error.hpp"

namespace tempgp {

struct PacfResult {
  std::vector<double> values;  // lags 1..max_lag
  double threshold = 0.0;      // 2 / sqrt(n)
  std::size_t n = 0;
};

/// Sample partial autocorrelations at lags 1..max_lag via the Durbin-Levinson
/// recursion on the biased sample autocovariances of the mean-centered series.
inline PacfResult compute_pacf(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (max_lag < 1) throw DataError("max_lag must be positive");
  if (n <= max_lag + 1) throw DataError("series too short for the requested max_lag");

  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = series[i] - mean;

  std::vector<double> acov(max_lag + 1, 0.0);
  for (std::size_t h = 0; h <= max_lag; ++h) {
    double s = 0.0;
    for (std::size_t i = h; i < n; ++i) s += c[i] * c[i - h];
    acov[h] = s / static_cast<double>(n);
  }
  double scale = 0.0;
  for (double v : series) scale = std::max(scale, std::abs(v));
  if (!(acov[0] > 1e-28 * std::max(1.0, scale * scale))) {
    throw DataError("PACF of a constant series is undefined");
  }

  PacfResult out;
  out.n = n;
  out.threshold = 2.0 / std::sqrt(static_cast<double>(n));
  out.values.resize(max_lag);

  std::vector<double> phi(max_lag + 1, 0.0), prev(max_lag + 1, 0.0);
  double v = acov[0];
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double num = acov[k];
    for (std::size_t j = 1; j < k; ++j) num -= prev[j] * acov[k - j];
    const double kappa = num / v;
    phi[k] = kappa;
    for (std::size_t j = 1; j < k; ++j) phi[j] = prev[j] - kappa * prev[k - j];
    v *= (1.0 - kappa * kappa);
    out.values[k - 1] = kappa;
    std::copy(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(k) + 1, prev.begin());
  }
  return out;
}

/// Smallest lag whose |PACF| falls inside the +-2/sqrt(n) band.
inline std::optional<std::size_t> pacf_cutoff(const PacfResult &pacf) {
  for (std::size_t h = 0; h < pacf.values.size(); ++h) {
    if (std::abs(pacf.values[h]) <= pacf.threshold) return h + 1;
  }
  return std::nullopt;
}

struct ThinningSelection {
  std::size_t T = 1;
  std::vector<std::size_t> per_covariate;
};

/// Thinning number: the largest, over covariates, of the per-covariate PACF
/// cutoff lag. Time gaps are ignored; rows are treated as consecutive.
inline ThinningSelection select_thinning(const TimeSeriesDataset &data,
                                         std::size_t max_lag = 200) {
  ThinningSelection sel;
  for (Eigen::Index j = 0; j < data.dim(); ++j) {
    const Eigen::VectorXd col = data.X().col(j);
    const auto &name = data.covariate_names()[static_cast<std::size_t>(j)];
    PacfResult pacf;
    try {
      pacf = compute_pacf(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                          max_lag);
    } catch (const DataError &e) {
      throw DataError("covariate '" + name + "': " + e.what());
    }
    const auto cut = pacf_cutoff(pacf);
    if (!cut) {
      throw DataError("covariate '" + name + "' has no PACF lag <= " + std::to_string(max_lag) +
                      " inside the 2/sqrt(N) band; raise max_lag");
    }
    sel.per_covariate.push_back(*cut);
    sel.T = std::max(sel.T, *cut);
  }
  return sel;
}

inline std::size_t select_thinning_number(const TimeSeriesDataset &data,
                                          std::size_t max_lag = 200) {
  return select_thinning(data, max_lag).T;
}

/// T interleaved bins; bin j holds rows j, j + T, j + 2T, ... (0-based).
struct ThinnedBins {
  std::size_t T = 1;
  std::size_t n = 0;
  std::vector<std::vector<Eigen::Index>> bins;
};

inline ThinnedBins thin_dataset(std::size_t n, std::size_t T) {
  if (T < 1 || T > n) {
    throw DataError("thinning number " + std::to_string(T) + " outside [1, " +
                    std::to_string(n) + "]");
  }
  ThinnedBins out{T, n, std::vector<std::vector<Eigen::Index>>(T)};
  for (std::size_t j = 0; j < T; ++j) {
    out.bins[j].reserve(n / T + 1);
    for (std::size_t i = j; i < n; i += T) out.bins[j].push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

inline ThinnedBins thin_dataset(const TimeSeriesDataset &data, std::size_t T) {
  return thin_dataset(static_cast<std::size_t>(data.size()), T);
}

}  // namespace tempgp
