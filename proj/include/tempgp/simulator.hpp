#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tempgp/dataset.hpp"
#include "tempgp/error.hpp"
#include "tempgp/kernels.hpp"
#include "tempgp/pdsolve.hpp"

namespace tempgp {

enum class TrueFunction {
  QuadraticSine,  // 5 x_1^2 + 3 sin(pi x_2)
  Quadratic,      // 5 x_1^2
};

inline double evaluate_true_function(TrueFunction fn, const Eigen::Ref<const Eigen::RowVectorXd> &x) {
  switch (fn) {
    case TrueFunction::QuadraticSine:
      return 5.0 * x(0) * x(0) + (x.size() > 1 ? 3.0 * std::sin(std::numbers::pi * x(1)) : 0.0);
    case TrueFunction::Quadratic: return 5.0 * x(0) * x(0);
  }
  return 0.0;
}

struct SimConfig {
  Eigen::Index N = 4000;
  // AR coefficients per covariate (x_t = sum_k a_k x_{t-k} + e_t); empty = i.i.d.
  std::vector<std::vector<double>> ar;
  TrueFunction function = TrueFunction::QuadraticSine;
  KernelFamily g_family = KernelFamily::Matern32;
  double sigma_g_sq = 2.0;
  double phi = 3.0;  // slots
  double sigma_eps_sq = 0.1;
  // Fraction of slots dropped at random after generation.
  double missing_fraction = 0.0;
  std::uint64_t seed = 1;
  // Blocked GP-path sampling: block length and conditioning window.
  Eigen::Index block = 256;
  Eigen::Index window = 64;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(ar.size()); }
};

/// Dataset plus the hidden components, y_i = f_i + g_i + eps_i.
struct SimOutput {
  TimeSeriesDataset data;
  Eigen::VectorXd f;
  Eigen::VectorXd g;
  Eigen::VectorXd eps;
};

// ---------------------------------------------------------------------------
// AR processes

/// AR coefficients whose partial autocorrelations are the given reflection
/// coefficients (step-up Levinson). |kappa_k| < 1 gives a stationary process.
inline std::vector<double> ar_from_pacf(const std::vector<double> &kappa) {
  std::vector<double> a;
  for (double k : kappa) {
    if (!(std::abs(k) < 1.0)) throw ConfigError("reflection coefficients must lie in (-1, 1)");
    std::vector<double> next(a.size() + 1);
    for (std::size_t j = 0; j < a.size(); ++j) next[j] = a[j] - k * a[a.size() - 1 - j];
    next.back() = k;
    a = std::move(next);
  }
  return a;
}

/// Spectral radius of the AR companion matrix.
inline double ar_spectral_radius(const std::vector<double> &a) {
  if (a.empty()) return 0.0;
  const auto p = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) C(0, j) = a[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) C(i, i - 1) = 1.0;
  return Eigen::EigenSolver<Eigen::MatrixXd>(C, false).eigenvalues().cwiseAbs().maxCoeff();
}

/// Stationary variance of an AR process with unit innovation variance
/// (step-down recursion to the reflection coefficients).
inline double ar_stationary_variance(std::vector<double> a) {
  double var = 1.0;
  while (!a.empty()) {
    const double k = a.back();
    const double denom = 1.0 - k * k;
    if (!(denom > 0.0)) throw ConfigError("AR process is not stationary");
    var /= denom;
    std::vector<double> prev(a.size() - 1);
    for (std::size_t j = 0; j < prev.size(); ++j) prev[j] = (a[j] + k * a[prev.size() - 1 - j]) / denom;
    a = std::move(prev);
  }
  return var;
}

/// Unit-variance stationary AR path of length n (burn-in discarded).
inline Eigen::VectorXd simulate_ar(const std::vector<double> &a, Eigen::Index n,
                                   std::mt19937_64 &rng, Eigen::Index burn_in = 1000) {
  if (ar_spectral_radius(a) >= 1.0) throw ConfigError("AR process is not stationary");
  const double sd = 1.0 / std::sqrt(ar_stationary_variance(a));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto p = a.size();
  std::vector<double> x(static_cast<std::size_t>(n + burn_in) + p, 0.0);
  for (std::size_t i = p; i < x.size(); ++i) {
    double v = sd * normal(rng);
    for (std::size_t k = 0; k < p; ++k) v += a[k] * x[i - 1 - k];
    x[i] = v;
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = x[p + static_cast<std::size_t>(burn_in + i)];
  return out;
}

// ---------------------------------------------------------------------------
// GP paths over time

/// Zero-mean GP path over sorted times with kernel q. Blocks of `block`
/// points are drawn conditionally on the previous `window` points.
inline Eigen::VectorXd sample_time_gp(const TimeKernel &q, const std::vector<TimeIndex> &times,
                                      std::mt19937_64 &rng, Eigen::Index block = 256,
                                      Eigen::Index window = 64) {
  const auto n = static_cast<Eigen::Index>(times.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  if (q.variance <= 0.0 || n == 0) return g;
  if (block < 1 || window < 0) throw ConfigError("invalid GP sampling block sizes");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double jitter = 1e-10 * q.variance;
  for (Eigen::Index start = 0; start < n; start += block) {
    const auto len = std::min(block, n - start);
    const auto c0 = std::max<Eigen::Index>(0, start - window);
    const auto nc = start - c0;
    std::vector<TimeIndex> tb(times.begin() + start, times.begin() + start + len);
    Eigen::MatrixXd Kbb = time_gram_matrix(q, tb);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(len);
    if (nc > 0) {
      std::vector<TimeIndex> tc(times.begin() + c0, times.begin() + start);
      Eigen::MatrixXd Kcc = time_gram_matrix(q, tc);
      Kcc.diagonal().array() += jitter;
      Eigen::MatrixXd Kbc(len, nc);
      for (Eigen::Index i = 0; i < len; ++i) {
        for (Eigen::Index j = 0; j < nc; ++j) {
          Kbc(i, j) = time_kernel_eval(q, static_cast<double>(tb[static_cast<std::size_t>(i)]),
                                       static_cast<double>(tc[static_cast<std::size_t>(j)]));
        }
      }
      const Eigen::LLT<Eigen::MatrixXd> llt(Kcc);
      const Eigen::MatrixXd A = llt.solve(Kbc.transpose()).transpose();
      mean = A * g.segment(c0, nc);
      Kbb -= A * Kbc.transpose();
      Kbb = 0.5 * (Kbb + Kbb.transpose());
    }
    Kbb.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(Kbb);
    if (llt.info() != Eigen::Success) throw NumericalError("GP path covariance not factorizable");
    Eigen::VectorXd z(len);
    for (Eigen::Index i = 0; i < len; ++i) z(i) = normal(rng);
    g.segment(start, len) = mean + llt.matrixL() * z;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Generators

inline void validate(const SimConfig &c) {
  if (c.N < 2) throw ConfigError("simulation needs N >= 2");
  if (c.ar.empty()) throw ConfigError("simulation needs at least one covariate");
  if (c.function == TrueFunction::QuadraticSine && c.ar.size() < 2) {
    throw ConfigError("the quadratic-sine function needs two covariates");
  }
  for (const auto &a : c.ar) {
    if (ar_spectral_radius(a) >= 1.0) throw ConfigError("non-stationary AR covariate");
  }
  if (c.sigma_g_sq < 0.0 || c.sigma_eps_sq < 0.0) throw ConfigError("variances must be >= 0");
  if (!(c.phi > 0.0)) throw ConfigError("time lengthscale must be positive");
  if (!(c.missing_fraction >= 0.0 && c.missing_fraction < 1.0)) {
    throw ConfigError("missing fraction must lie in [0, 1)");
  }
}

/// Covariates are independent unit-variance AR paths pushed through the
/// normal CDF into (0, 1); f uses the leading covariates only, the rest are
/// nuisance. g is a stationary GP path over the integer time grid.
inline SimOutput simulate_temporal(const SimConfig &c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  const auto d = c.dim();
  Eigen::MatrixXd X(c.N, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::VectorXd z = simulate_ar(c.ar[static_cast<std::size_t>(j)], c.N, rng);
    X.col(j) = z.unaryExpr([](double v) { return 0.5 * std::erfc(-v / std::numbers::sqrt2); });
  }
  std::vector<TimeIndex> t(static_cast<std::size_t>(c.N));
  std::iota(t.begin(), t.end(), TimeIndex{0});
  const Eigen::VectorXd g =
      sample_time_gp(TimeKernel{c.g_family, c.sigma_g_sq, c.phi}, t, rng, c.block, c.window);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd f(c.N), eps(c.N), y(c.N);
  const double sd = std::sqrt(c.sigma_eps_sq);
  for (Eigen::Index i = 0; i < c.N; ++i) {
    f(i) = evaluate_true_function(c.function, X.row(i));
    eps(i) = sd * normal(rng);
    y(i) = f(i) + g(i) + eps(i);
  }

  std::vector<Eigen::Index> keep;
  if (c.missing_fraction > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < c.N; ++i) {
      if (u(rng) >= c.missing_fraction) keep.push_back(i);
    }
    if (keep.size() < 2) throw ConfigError("missing fraction leaves fewer than two rows");
  } else {
    keep.resize(static_cast<std::size_t>(c.N));
    std::iota(keep.begin(), keep.end(), Eigen::Index{0});
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
  std::vector<TimeIndex> tk;
  for (auto i : keep) tk.push_back(t[static_cast<std::size_t>(i)]);
  TimeSeriesDataset data(y(keep), X(keep, Eigen::all), std::move(tk), std::move(names));
  return {std::move(data), f(keep), g(keep), eps(keep)};
}

struct Fig2Config {
  Eigen::Index N = 500;
  double lengthscale = 0.05;
  double error_variance = 1.0;
  double ar_coefficient = 0.98;
  // Replace the input-correlated error by i.i.d. noise of the same variance.
  bool independent = false;
  std::uint64_t seed = 1;
};

/// y = 5 x^2 + e with x a slowly varying AR(1) path rescaled to [0, 1] and e
/// a zero-mean GP over x with an exponential kernel (exact Ornstein-Uhlenbeck
/// recursion over sorted x). The correlated error is stored in g; the
/// independent variant stores its noise in eps.
inline SimOutput simulate_fig2(const Fig2Config &c) {
  if (c.N < 2) throw ConfigError("simulation needs N >= 2");
  if (!(c.lengthscale > 0.0) || !std::isfinite(c.lengthscale)) {
    throw ConfigError("lengthscale must be positive");
  }
  if (!(c.error_variance >= 0.0)) throw ConfigError("error variance must be >= 0");
  if (!(std::abs(c.ar_coefficient) < 1.0)) throw ConfigError("AR coefficient must lie in (-1, 1)");
  std::mt19937_64 rng(c.seed);
  Eigen::VectorXd x = simulate_ar({c.ar_coefficient}, c.N, rng);
  const double lo = x.minCoeff(), hi = x.maxCoeff();
  x = (x.array() - lo) / (hi - lo);

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(c.N), eps = Eigen::VectorXd::Zero(c.N);
  const double sd = std::sqrt(c.error_variance);
  if (c.independent) {
    for (Eigen::Index i = 0; i < c.N; ++i) eps(i) = sd * normal(rng);
  } else {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(c.N));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a) < x(b); });
    double prev = sd * normal(rng);
    g(order[0]) = prev;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const double rho = std::exp(-(x(order[k]) - x(order[k - 1])) / c.lengthscale);
      prev = rho * prev + sd * std::sqrt(std::max(0.0, 1.0 - rho * rho)) * normal(rng);
      g(order[k]) = prev;
    }
  }
  Eigen::VectorXd f = 5.0 * x.array().square();
  Eigen::VectorXd y = f + g + eps;
  std::vector<TimeIndex> t(static_cast<std::size_t>(c.N));
  std::iota(t.begin(), t.end(), TimeIndex{0});
  TimeSeriesDataset data(y, Eigen::MatrixXd(x), std::move(t), {"x"});
  return {std::move(data), std::move(f), std::move(g), std::move(eps)};
}

/// Default temporal-overfitting benchmark: two causal and two nuisance
/// covariates, all slowly varying AR(8) processes, and a strong g process.
inline SimConfig temporal_preset(Eigen::Index N = 4000, std::uint64_t seed = 1) {
  SimConfig c;
  c.N = N;
  c.seed = seed;
  const auto causal = ar_from_pacf({0.9, -0.4, 0.3, -0.3, 0.3, -0.3, 0.3, -0.3});
  const auto nuisance = ar_from_pacf({0.95, -0.4, 0.3, -0.3, 0.3, -0.3, 0.3, -0.3});
  c.ar = {causal, causal, nuisance, nuisance};
  return c;
}

}  // namespace tempgp
