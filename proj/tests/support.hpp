#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numerical code paths.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tempgp/dataset.hpp"
#include "tempgp/kernels.hpp"

namespace tempgp::testkit {

inline TimeSeriesDataset random_dataset(Eigen::Index n, Eigen::Index d, std::mt19937_64 &rng,
                                        double noise = 0.3) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = normal(rng);
  }
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = std::sin(X(i, 0)) + 0.5 * X.row(i).sum() + noise * normal(rng);
  std::vector<TimeIndex> t(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = 3 * i + 7;
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
  return {y, X, t, names};
}

/// Correlation profile written out from the textbook formulas.
inline double oracle_profile(KernelFamily f, double r) {
  switch (f) {
    case KernelFamily::SquaredExponential: return std::exp(-0.5 * r * r);
    case KernelFamily::Exponential: return std::exp(-r);
    case KernelFamily::Matern32: return (1.0 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r);
    case KernelFamily::Matern52:
      return (1.0 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
  }
  return 0.0;
}

inline double oracle_kernel(KernelFamily f, double var, const Eigen::VectorXd &theta,
                            const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
  double s = 0.0;
  for (Eigen::Index l = 0; l < a.size(); ++l) s += std::pow((a(l) - b(l)) / theta(l), 2);
  return var * oracle_profile(f, std::sqrt(s));
}

/// Gaussian log density N(y | m 1, C) from an eigendecomposition of C.
inline double oracle_gaussian_loglik(const Eigen::MatrixXd &C, const Eigen::VectorXd &r) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  const Eigen::VectorXd lam = es.eigenvalues();
  const Eigen::VectorXd z = es.eigenvectors().transpose() * r;
  double quad = 0.0, logdet = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    quad += z(i) * z(i) / lam(i);
    logdet += std::log(lam(i));
  }
  return -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(r.size()) * std::log(2.0 * M_PI);
}

/// Full-data GP log marginal likelihood with covariance K + sigma_u^2 I.
inline double oracle_gp_loglik(KernelFamily f, double beta, double sf2, const Eigen::VectorXd &theta,
                               double su2, const Eigen::MatrixXd &X, const Eigen::VectorXd &y) {
  const auto n = X.rows();
  Eigen::MatrixXd C(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      C(i, j) = oracle_kernel(f, sf2, theta, X.row(i).transpose(), X.row(j).transpose());
    }
    C(i, i) += su2;
  }
  return oracle_gaussian_loglik(C, (y.array() - beta).matrix());
}

/// PACF(h) as the last coefficient of an OLS regression of the centered
/// series on its first h lags (zero-padded, matching biased autocovariances).
inline std::vector<double> oracle_pacf(const Eigen::VectorXd &x, std::size_t max_lag) {
  const auto n = x.size();
  const Eigen::VectorXd c = x.array() - x.mean();
  std::vector<double> out;
  for (std::size_t h = 1; h <= max_lag; ++h) {
    const auto H = static_cast<Eigen::Index>(h);
    // Zero padding on both ends makes X^T X Toeplitz in the biased
    // autocovariances, which is the Yule-Walker system.
    const Eigen::Index rows = n + H;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, H);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (i < n) b(i) = c(i);
      for (Eigen::Index k = 1; k <= H; ++k) {
        const Eigen::Index src = i - k;
        if (src >= 0 && src < n) A(i, k - 1) = c(src);
      }
    }
    const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
    out.push_back(coef(H - 1));
  }
  return out;
}

/// Central differences of a scalar function of a vector.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd &)> &f,
                                         const Eigen::VectorXd &x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Max over coordinates of |a - b| / max(|b|, floor).
inline double relative_error(const Eigen::VectorXd &a, const Eigen::VectorXd &b, double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(std::abs(b(i)), floor));
  }
  return worst;
}

inline std::filesystem::path temp_dir(const std::string &name) {
  auto p = std::filesystem::temp_directory_path() / ("tempgp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline const std::vector<KernelFamily> &all_families() {
  static const std::vector<KernelFamily> f = {KernelFamily::SquaredExponential,
                                              KernelFamily::Matern32, KernelFamily::Matern52,
                                              KernelFamily::Exponential};
  return f;
}

}  // namespace tempgp::testkit
