#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tempgp/dataset.hpp"
#include "tempgp/error.hpp"
#include "tempgp/kernels.hpp"
#include "tempgp/optimize.hpp"
#include "tempgp/pdsolve.hpp"
#include "tempgp/thinning.hpp"

namespace tempgp {

// ---------------------------------------------------------------------------
// Hyperparameters

/// Parameters of the time-invariant component: prior mean beta, kernel
/// variance sigma_f^2, per-covariate lengthscales theta and the first-stage
/// noise variance sigma_u^2 that absorbs the temporal residual.
struct FHyperparams {
  double beta = 0.0;
  double sigma_f_sq = 1.0;
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(1);
  double sigma_u_sq = 1.0;

  Eigen::Index dim() const { return theta.size(); }

  /// Optimizer coordinates (beta, log sigma_f^2, log theta_1..d, log sigma_u^2).
  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd v(theta.size() + 3);
    v(0) = beta;
    v(1) = std::log(sigma_f_sq);
    v.segment(2, theta.size()) = theta.array().log().matrix();
    v(theta.size() + 2) = std::log(sigma_u_sq);
    return v;
  }

  static FHyperparams from_vector(const Eigen::VectorXd &v) {
    if (v.size() < 4) throw std::invalid_argument("FHyperparams vector too short");
    const auto d = v.size() - 3;
    return {v(0), std::exp(v(1)), v.segment(2, d).array().exp().matrix(), std::exp(v(d + 2))};
  }

  KernelSpec kernel(KernelFamily family) const { return {family, sigma_f_sq, theta}; }

  void validate() const {
    auto ok = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!std::isfinite(beta) || !ok(sigma_f_sq) || !ok(sigma_u_sq) || theta.size() < 1 ||
        !(theta.array() > 0.0).all() || !theta.allFinite()) {
      throw std::invalid_argument("f hyperparameters must be finite with positive scales");
    }
  }
};

/// Parameters of the temporal component g and the i.i.d. noise.
struct GHyperparams {
  double sigma_g_sq = 1.0;
  double phi = 1.0;
  double sigma_eps_sq = 1.0;
};

struct OptimizerSettings {
  int max_iterations = 200;
  // Applied to the per-observation objective, so it does not scale with N.
  double gradient_tolerance = 1e-5;
  double function_tolerance = 1e-12;
  int restarts = 3;
  std::uint64_t seed = 1;
  // Standard deviation of the log-scale perturbation for restarts after the first.
  double perturbation = 1.0;
};

struct FitConfig {
  KernelFamily kernel = KernelFamily::Matern32;
  KernelFamily time_kernel = KernelFamily::Matern32;
  OptimizerSettings optimizer;
  bool parallel_bins = true;
  // Relative diagonal jitter tried only after a factorization fails.
  double jitter = 1e-8;
  // Largest training size for the single recombined solve used in prediction.
  Eigen::Index max_full_solve = 8000;
  // Local g estimation.
  bool g_cache = true;
  double g_cache_overlap = 0.9;
  int g_max_iterations = 100;
  // Largest N accepted by the joint comparator.
  Eigen::Index joint_max_n = 3000;
  // Box constraints, variances relative to var(y); lengthscales absolute
  // (inputs are standardized).
  double variance_lower = 1e-6;
  double variance_upper = 1e3;
  double lengthscale_lower = 1e-3;
  double lengthscale_upper = 1e3;
};

struct LikelihoodValue {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  bool finite() const { return std::isfinite(value); }
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093453;

struct BinTerm {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
};

inline double variance_scale(const Eigen::VectorXd &y) {
  const double mean = y.mean();
  const double var = y.size() > 1 ? (y.array() - mean).square().sum() / (y.size() - 1) : 0.0;
  return var > 1e-12 * (1.0 + mean * mean) ? var : 1.0;
}

/// Gaussian log density of y under N(beta 1, K + sigma_u^2 I) and its
/// gradient in optimizer coordinates.
inline BinTerm bin_log_likelihood(const FHyperparams &p, KernelFamily family,
                                  const Eigen::MatrixXd &X, const Eigen::VectorXd &y,
                                  double jitter, bool with_gradient) {
  const auto n = X.rows();
  const auto d = X.cols();
  const KernelSpec spec = p.kernel(family);
  Eigen::MatrixXd C = gram_matrix(spec, X);
  C.diagonal().array() += p.sigma_u_sq;
  BinTerm out;
  auto fact = factorize_with_jitter(std::move(C), jitter);
  if (!fact) return out;
  const Eigen::VectorXd r = y.array() - p.beta;
  const auto &F = fact->factor;
  out.value = -0.5 * F.quad_form(r) - 0.5 * F.log_det() - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!with_gradient) return out;

  const Eigen::VectorXd alpha = F.solve(r);
  // W = alpha alpha^T - C^{-1}; d logL / d psi = 1/2 tr(W dC/dpsi).
  Eigen::MatrixXd W = F.inverse();
  W = alpha * alpha.transpose() - W;

  out.gradient = Eigen::VectorXd::Zero(d + 3);
  out.gradient(0) = alpha.sum();
  const Eigen::VectorXd inv = spec.lengthscales.cwiseInverse();
  double g_var = 0.0;
  Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd z(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    g_var += 0.5 * W(j, j) * spec.variance;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double r2 = 0.0;
      for (Eigen::Index l = 0; l < d; ++l) {
        z(l) = (X(i, l) - X(j, l)) * inv(l);
        z(l) *= z(l);
        r2 += z(l);
      }
      const double rr = std::sqrt(r2);
      const double w = W(i, j);
      g_var += w * spec.variance * profile(family, rr);
      const double s = w * spec.variance * slope(family, rr);
      g_theta += s * z;
    }
  }
  out.gradient(1) = g_var;
  out.gradient.segment(2, d) = g_theta;
  out.gradient(d + 2) = 0.5 * p.sigma_u_sq * W.trace();
  return out;
}

}  // namespace detail

/// Sum over bins of the per-bin Gaussian log likelihoods (inter-bin
/// correlation ignored). The gradient is taken with respect to
/// (beta, log sigma_f^2, log theta_1..d, log sigma_u^2). Returns a value of
/// -inf when some bin covariance cannot be factorized even with jitter.
inline LikelihoodValue log_pseudo_likelihood(const FHyperparams &params, const ThinnedBins &bins,
                                             const TimeSeriesDataset &data, KernelFamily family,
                                             bool with_gradient = true, double jitter = 1e-8,
                                             bool parallel = true) {
  params.validate();
  if (params.dim() != data.dim()) throw std::invalid_argument("theta dimension mismatch");
  if (bins.n != static_cast<std::size_t>(data.size())) {
    throw std::invalid_argument("bins do not match dataset size");
  }
  const auto T = static_cast<long>(bins.bins.size());
  std::vector<detail::BinTerm> terms(bins.bins.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel && T > 1)
#endif
  for (long j = 0; j < T; ++j) {
    const auto &rows = bins.bins[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd Xb = data.X()(rows, Eigen::all);
    const Eigen::VectorXd yb = data.y()(rows);
    terms[static_cast<std::size_t>(j)] =
        detail::bin_log_likelihood(params, family, Xb, yb, jitter, with_gradient);
  }
  (void)parallel;
  LikelihoodValue out;
  out.value = 0.0;
  if (with_gradient) out.gradient = Eigen::VectorXd::Zero(params.dim() + 3);
  for (const auto &t : terms) {
    if (!std::isfinite(t.value)) {
      out.value = -std::numeric_limits<double>::infinity();
      return out;
    }
    out.value += t.value;
    if (with_gradient) out.gradient += t.gradient;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting f

struct RestartRecord {
  double initial_objective = -std::numeric_limits<double>::infinity();
  double final_objective = -std::numeric_limits<double>::infinity();
  Termination termination = Termination::LineSearchFailure;
  int iterations = 0;
};

struct FitDiagnostics {
  // Log (pseudo-)likelihood at the returned parameters.
  double objective = -std::numeric_limits<double>::infinity();
  // Projected gradient infinity norm of the per-observation objective.
  double gradient_norm = std::numeric_limits<double>::infinity();
  Termination termination = Termination::LineSearchFailure;
  int iterations = 0;
  int evaluations = 0;
  std::vector<RestartRecord> restarts;
  double mean_bin_size = 0.0;
  bool hit_max_iterations() const { return termination == Termination::MaxIterations; }
};

struct FFit {
  FHyperparams params;
  FitDiagnostics diagnostics;
};

namespace detail {

struct Box {
  Eigen::VectorXd lo, hi;
};

inline Box f_bounds(const FitConfig &cfg, Eigen::Index d, double scale) {
  Box b{Eigen::VectorXd(d + 3), Eigen::VectorXd(d + 3)};
  const double inf = std::numeric_limits<double>::infinity();
  b.lo(0) = -inf;
  b.hi(0) = inf;
  b.lo(1) = b.lo(d + 2) = std::log(cfg.variance_lower * scale);
  b.hi(1) = b.hi(d + 2) = std::log(cfg.variance_upper * scale);
  b.lo.segment(2, d).setConstant(std::log(cfg.lengthscale_lower));
  b.hi.segment(2, d).setConstant(std::log(cfg.lengthscale_upper));
  return b;
}

/// Multi-start maximization of a log likelihood given in optimizer coordinates.
template <typename LogLik>
LbfgsResult maximize_multistart(const LogLik &loglik, const Eigen::VectorXd &x0, const Box &box,
                                const std::vector<Eigen::Index> &perturbed, double n_obs,
                                const OptimizerSettings &opt, int max_iterations,
                                std::vector<RestartRecord> &records, int &evaluations) {
  const Objective objective = [&](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
    const LikelihoodValue v = loglik(x);
    if (!v.finite()) return std::numeric_limits<double>::infinity();
    g = -v.gradient / n_obs;
    return -v.value / n_obs;
  };
  LbfgsSettings ls;
  ls.max_iterations = max_iterations;
  ls.gradient_tolerance = opt.gradient_tolerance;
  ls.function_tolerance = opt.function_tolerance;

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, opt.perturbation);
  LbfgsResult best;
  bool have_best = false;
  const int starts = std::max(1, opt.restarts);
  for (int k = 0; k < starts; ++k) {
    Eigen::VectorXd start = x0;
    if (k > 0) {
      for (auto i : perturbed) start(i) += normal(rng);
    }
    start = start.cwiseMax(box.lo).cwiseMin(box.hi);
    LbfgsResult res = minimize_lbfgs(objective, start, box.lo, box.hi, ls);
    evaluations += res.evaluations;
    RestartRecord rec;
    rec.termination = res.termination;
    rec.iterations = res.iterations;
    rec.final_objective = std::isfinite(res.value) ? -res.value * n_obs
                                                   : -std::numeric_limits<double>::infinity();
    {
      Eigen::VectorXd g0;
      const double f0 = objective(start, g0);
      rec.initial_objective =
          std::isfinite(f0) ? -f0 * n_obs : -std::numeric_limits<double>::infinity();
    }
    records.push_back(rec);
    if (std::isfinite(res.value) && (!have_best || res.value < best.value)) {
      best = std::move(res);
      have_best = true;
    }
  }
  if (!have_best) {
    throw NumericalError(
        "every optimizer start failed to factorize the covariance; increase kernel.jitter or "
        "adjust the configuration");
  }
  return best;
}

}  // namespace detail

/// Maximizes the binned pseudo-likelihood over (beta, sigma_f^2, theta,
/// sigma_u^2) with multi-start projected L-BFGS in log coordinates.
inline FFit fit_f(const TimeSeriesDataset &data, const ThinnedBins &bins, const FitConfig &cfg) {
  const auto d = data.dim();
  const auto n = data.size();
  if (n < d + 3) throw DataError("fit_f needs at least d + 3 observations");
  if (bins.n != static_cast<std::size_t>(n)) throw DataError("bins do not match dataset");

  const double scale = detail::variance_scale(data.y());
  const auto box = detail::f_bounds(cfg, d, scale);
  const double var = (data.y().array() - data.y().mean()).square().sum() /
                     static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  FHyperparams init;
  init.beta = data.y().mean();
  init.sigma_f_sq = std::max(0.5 * var, cfg.variance_lower * scale);
  init.sigma_u_sq = std::max(0.5 * var, cfg.variance_lower * scale);
  init.theta = Eigen::VectorXd::Constant(d, std::sqrt(static_cast<double>(d)));

  std::vector<Eigen::Index> perturbed;
  for (Eigen::Index i = 1; i < d + 3; ++i) perturbed.push_back(i);

  const auto loglik = [&](const Eigen::VectorXd &x) {
    return log_pseudo_likelihood(FHyperparams::from_vector(x), bins, data, cfg.kernel, true,
                                 cfg.jitter, cfg.parallel_bins);
  };
  FFit fit;
  const auto best = detail::maximize_multistart(
      loglik, init.to_vector(), box, perturbed, static_cast<double>(n), cfg.optimizer,
      cfg.optimizer.max_iterations, fit.diagnostics.restarts, fit.diagnostics.evaluations);
  fit.params = FHyperparams::from_vector(best.x);
  fit.diagnostics.objective = -best.value * static_cast<double>(n);
  fit.diagnostics.gradient_norm = best.projected_gradient_norm;
  fit.diagnostics.termination = best.termination;
  fit.diagnostics.iterations = best.iterations;
  fit.diagnostics.mean_bin_size = static_cast<double>(n) / static_cast<double>(bins.T);
  return fit;
}

// ---------------------------------------------------------------------------
// Trained model

/// Trained time-invariant component plus everything needed for local g
/// estimation. alpha caches [K + sigma_u^2 I]^{-1} (y - beta 1) over all
/// training rows so that f(x) = beta + r(x)^T alpha.
class TempGPModel {
 public:
  TempGPModel(TimeSeriesDataset train, FHyperparams params, KernelFamily kernel,
              KernelFamily time_kernel, std::size_t T, Eigen::VectorXd alpha,
              Eigen::VectorXd residuals, bool approximate_alpha,
              std::optional<Preprocessing> preprocessing = std::nullopt)
      : train_(std::move(train)),
        params_(std::move(params)),
        kernel_(kernel),
        time_kernel_(time_kernel),
        T_(T),
        alpha_(std::move(alpha)),
        residuals_(std::move(residuals)),
        approximate_alpha_(approximate_alpha),
        preprocessing_(std::move(preprocessing)) {
    params_.validate();
    if (alpha_.size() != train_.size() || residuals_.size() != train_.size()) {
      throw std::invalid_argument("alpha and residuals must have one entry per training row");
    }
    if (params_.dim() != train_.dim()) throw std::invalid_argument("theta dimension mismatch");
    if (T_ < 1) throw std::invalid_argument("thinning number must be positive");
    inv_theta_ = params_.theta.cwiseInverse();
  }

  /// Computes alpha (one recombined solve, or per-bin averaging above
  /// cfg.max_full_solve) and the training residuals.
  static TempGPModel build(TimeSeriesDataset train, FHyperparams params, std::size_t T,
                           const FitConfig &cfg,
                           std::optional<Preprocessing> preprocessing = std::nullopt) {
    params.validate();
    const auto n = train.size();
    Eigen::VectorXd alpha(n);
    bool approximate = false;
    const KernelSpec spec = params.kernel(cfg.kernel);
    auto solve_block = [&](const std::vector<Eigen::Index> &rows) {
      const Eigen::MatrixXd Xb = train.X()(rows, Eigen::all);
      Eigen::MatrixXd C = gram_matrix(spec, Xb);
      C.diagonal().array() += params.sigma_u_sq;
      auto fact = factorize_with_jitter(std::move(C), cfg.jitter);
      if (!fact) throw NumericalError("prediction covariance is not positive definite");
      const Eigen::VectorXd r = train.y()(rows).array() - params.beta;
      return Eigen::VectorXd(fact->factor.solve(r));
    };
    if (n <= cfg.max_full_solve) {
      std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
      alpha = solve_block(all);
    } else {
      // Average of the per-bin predictors; folds into the same r(x)^T alpha form.
      approximate = true;
      const auto bins = thin_dataset(train, std::max<std::size_t>(
                                                T, static_cast<std::size_t>(
                                                       (n + cfg.max_full_solve - 1) /
                                                       cfg.max_full_solve)));
      const double w = 1.0 / static_cast<double>(bins.T);
      for (const auto &rows : bins.bins) {
        const Eigen::VectorXd a = solve_block(rows);
        for (std::size_t k = 0; k < rows.size(); ++k) {
          alpha(rows[k]) = w * a(static_cast<Eigen::Index>(k));
        }
      }
    }
    TempGPModel model(std::move(train), std::move(params), cfg.kernel, cfg.time_kernel, T,
                      std::move(alpha), Eigen::VectorXd::Zero(n), approximate,
                      std::move(preprocessing));
    model.residuals_ = model.compute_residuals();
    return model;
  }

  const TimeSeriesDataset &train() const { return train_; }
  const FHyperparams &params() const { return params_; }
  KernelFamily kernel() const { return kernel_; }
  KernelFamily time_kernel() const { return time_kernel_; }
  std::size_t thinning_number() const { return T_; }
  const Eigen::VectorXd &alpha() const { return alpha_; }
  const Eigen::VectorXd &residuals() const { return residuals_; }
  bool approximate_alpha() const { return approximate_alpha_; }
  const std::optional<Preprocessing> &preprocessing() const { return preprocessing_; }

  double predict_f(const Eigen::Ref<const Eigen::VectorXd> &x) const {
    if (x.size() != train_.dim()) throw std::invalid_argument("predict_f: dimension mismatch");
    const auto &X = train_.X();
    double s = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double r = std::sqrt(detail::scaled_sq_distance(x, X.row(i), inv_theta_));
      s += params_.sigma_f_sq * detail::profile(kernel_, r) * alpha_(i);
    }
    return params_.beta + s;
  }

  Eigen::VectorXd predict_f_batch(const Eigen::MatrixXd &Xs) const {
    Eigen::VectorXd out(Xs.rows());
    for (Eigen::Index i = 0; i < Xs.rows(); ++i) out(i) = predict_f(Xs.row(i).transpose());
    return out;
  }

  /// y_i - f(x_i) over the training rows, recomputed from the stored state.
  Eigen::VectorXd compute_residuals() const { return train_.y() - predict_f_batch(train_.X()); }

 private:
  TimeSeriesDataset train_;
  FHyperparams params_;
  KernelFamily kernel_;
  KernelFamily time_kernel_;
  std::size_t T_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd residuals_;
  bool approximate_alpha_ = false;
  std::optional<Preprocessing> preprocessing_;
  Eigen::VectorXd inv_theta_;
};

struct TrainResult {
  TempGPModel model;
  FitDiagnostics diagnostics;
};

/// Full training pipeline on standardized data: choose T (or use the
/// override), thin, fit f, build the prediction cache.
inline TrainResult train_tempgp(const TimeSeriesDataset &data, const FitConfig &cfg,
                                std::optional<std::size_t> T_override = std::nullopt,
                                std::size_t max_lag = 200,
                                std::optional<Preprocessing> preprocessing = std::nullopt) {
  const std::size_t T = T_override ? *T_override : select_thinning_number(data, max_lag);
  const auto bins = thin_dataset(data, T);
  auto fit = fit_f(data, bins, cfg);
  auto model = TempGPModel::build(data, fit.params, T, cfg, std::move(preprocessing));
  return {std::move(model), std::move(fit.diagnostics)};
}

// ---------------------------------------------------------------------------
// Local temporal component g

struct GEstimate {
  double value = 0.0;
  std::optional<GHyperparams> params;
  std::size_t neighborhood = 0;
  bool fallback = false;    // local MLE failed, value forced to 0
  bool from_cache = false;  // hyperparameters reused from an earlier t*
};

namespace detail {

inline LikelihoodValue local_g_log_likelihood(const GHyperparams &p, KernelFamily family,
                                              std::span<const TimeIndex> times,
                                              const Eigen::VectorXd &e, double jitter) {
  const TimeKernel q{family, p.sigma_g_sq, p.phi};
  Eigen::MatrixXd C = time_gram_matrix(q, times);
  C.diagonal().array() += p.sigma_eps_sq;
  LikelihoodValue out;
  auto fact = factorize_with_jitter(std::move(C), jitter);
  if (!fact) return out;
  const auto &F = fact->factor;
  const auto n = e.size();
  out.value = -0.5 * F.quad_form(e) - 0.5 * F.log_det() - 0.5 * static_cast<double>(n) * kLog2Pi;
  const Eigen::VectorXd alpha = F.solve(e);
  Eigen::MatrixXd W = alpha * alpha.transpose() - F.inverse();
  out.gradient = Eigen::VectorXd::Zero(3);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector2d g = time_kernel_grad(q, static_cast<double>(times[i]),
                                                 static_cast<double>(times[j]));
      out.gradient(0) += 0.5 * W(i, j) * g(0);
      out.gradient(1) += 0.5 * W(i, j) * g(1);
    }
  }
  out.gradient(2) = 0.5 * p.sigma_eps_sq * W.trace();
  return out;
}

}  // namespace detail

/// Fits and evaluates g at query times for one trained model. Consecutive
/// queries whose neighborhoods overlap by at least cfg.g_cache_overlap reuse
/// the previous local hyperparameters when caching is enabled. A session is
/// not thread-safe; use one per thread.
class GPredictor {
 public:
  GPredictor(const TempGPModel &model, FitConfig cfg) : model_(&model), cfg_(std::move(cfg)) {}

  /// Neighborhood J* = {j : |t* - t_j| <= T} as a half-open row range.
  std::pair<Eigen::Index, Eigen::Index> neighborhood(TimeIndex t) const {
    const auto &ts = model_->train().t();
    const auto T = static_cast<TimeIndex>(model_->thinning_number());
    const auto lo = std::lower_bound(ts.begin(), ts.end(), t - T) - ts.begin();
    const auto hi = std::upper_bound(ts.begin(), ts.end(), t + T) - ts.begin();
    return {lo, hi};
  }

  GEstimate fit_predict(TimeIndex t, const GHyperparams *fixed = nullptr) {
    GEstimate out;
    const auto [lo, hi] = neighborhood(t);
    out.neighborhood = static_cast<std::size_t>(hi - lo);
    if (hi <= lo) return out;

    const auto &ts = model_->train().t();
    const std::span<const TimeIndex> times(ts.data() + lo, static_cast<std::size_t>(hi - lo));
    const Eigen::VectorXd e = model_->residuals().segment(lo, hi - lo);
    if ((e.array() == 0.0).all()) return out;

    std::optional<GHyperparams> params;
    if (fixed) {
      params = *fixed;
    } else if (out.neighborhood < 3) {
      params = nearest_cached(t);
      out.from_cache = params.has_value();
      if (!params) return out;
    } else if (cfg_.g_cache && last_ && overlap(*last_, {lo, hi}) >= cfg_.g_cache_overlap) {
      params = last_->params;
      out.from_cache = true;
    } else {
      params = fit_local(times, e);
      if (!params) {
        out.fallback = true;
        return out;
      }
      last_ = CacheEntry{lo, hi, *params};
      history_[t] = *params;
    }
    out.params = params;
    out.value = evaluate(*params, t, times, e);
    if (!std::isfinite(out.value)) {
      out.value = 0.0;
      out.fallback = true;
    }
    return out;
  }

  double predict(const Eigen::Ref<const Eigen::VectorXd> &x, TimeIndex t) {
    return model_->predict_f(x) + fit_predict(t).value;
  }

 private:
  struct CacheEntry {
    Eigen::Index lo, hi;
    GHyperparams params;
  };

  static double overlap(const CacheEntry &a, std::pair<Eigen::Index, Eigen::Index> b) {
    const auto inter = std::max<Eigen::Index>(0, std::min(a.hi, b.second) - std::max(a.lo, b.first));
    const auto size = std::max(a.hi - a.lo, b.second - b.first);
    return size > 0 ? static_cast<double>(inter) / static_cast<double>(size) : 0.0;
  }

  std::optional<GHyperparams> nearest_cached(TimeIndex t) const {
    if (history_.empty()) return std::nullopt;
    auto it = history_.lower_bound(t);
    if (it == history_.end()) return std::prev(it)->second;
    if (it == history_.begin()) return it->second;
    const auto prev = std::prev(it);
    return (t - prev->first <= it->first - t) ? prev->second : it->second;
  }

  std::optional<GHyperparams> fit_local(std::span<const TimeIndex> times,
                                        const Eigen::VectorXd &e) const {
    const auto n = e.size();
    const double scale = std::max(e.squaredNorm() / static_cast<double>(n), 1e-300);
    const double mean = e.mean();
    double var = (e.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    if (!(var > 0.0)) var = scale;
    const double T = static_cast<double>(model_->thinning_number());
    detail::Box box{Eigen::Vector3d(std::log(1e-8 * scale), std::log(0.05),
                                    std::log(1e-6 * scale)),
                    Eigen::Vector3d(std::log(1e2 * scale), std::log(1e4 * std::max(T, 1.0)),
                                    std::log(1e2 * scale))};
    Eigen::VectorXd x0(3);
    x0 << std::log(0.5 * var), std::log(std::max(T / 2.0, 0.05)), std::log(0.5 * var);
    const KernelFamily family = model_->time_kernel();
    const double jitter = cfg_.jitter;
    const auto loglik = [&](const Eigen::VectorXd &x) {
      const GHyperparams p{std::exp(x(0)), std::exp(x(1)), std::exp(x(2))};
      return detail::local_g_log_likelihood(p, family, times, e, jitter);
    };
    OptimizerSettings opt = cfg_.optimizer;
    opt.restarts = 1;
    std::vector<RestartRecord> records;
    int evals = 0;
    try {
      const auto best = detail::maximize_multistart(loglik, x0, box, {}, static_cast<double>(n),
                                                    opt, cfg_.g_max_iterations, records, evals);
      return GHyperparams{std::exp(best.x(0)), std::exp(best.x(1)), std::exp(best.x(2))};
    } catch (const NumericalError &) {
      return std::nullopt;
    }
  }

  double evaluate(const GHyperparams &p, TimeIndex t, std::span<const TimeIndex> times,
                  const Eigen::VectorXd &e) const {
    const TimeKernel q{model_->time_kernel(), p.sigma_g_sq, p.phi};
    Eigen::MatrixXd C = time_gram_matrix(q, times);
    C.diagonal().array() += p.sigma_eps_sq;
    auto fact = factorize_with_jitter(std::move(C), cfg_.jitter);
    if (!fact) return std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd s(e.size());
    for (Eigen::Index j = 0; j < e.size(); ++j) {
      s(j) = time_kernel_eval(q, static_cast<double>(t), static_cast<double>(times[j]));
    }
    return s.dot(fact->factor.solve(e));
  }

  const TempGPModel *model_;
  FitConfig cfg_;
  std::optional<CacheEntry> last_;
  std::map<TimeIndex, GHyperparams> history_;
};

/// Exact per-t* estimate of g with a fresh session (no reuse across calls).
inline GEstimate fit_predict_g(const TempGPModel &model, TimeIndex t, FitConfig cfg = {},
                               const GHyperparams *fixed = nullptr) {
  cfg.g_cache = false;
  GPredictor session(model, std::move(cfg));
  return session.fit_predict(t, fixed);
}

/// f(x*) + g(t*); g vanishes when no training time lies within T of t*.
inline double predict(const TempGPModel &model, const Eigen::Ref<const Eigen::VectorXd> &x,
                      TimeIndex t, FitConfig cfg = {}) {
  return model.predict_f(x) + fit_predict_g(model, t, std::move(cfg)).value;
}

// ---------------------------------------------------------------------------
// Joint (direct) estimation comparator

struct JointHyperparams {
  double beta = 0.0;
  double sigma_f_sq = 1.0;
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(1);
  GHyperparams g;

  /// (beta, log sigma_f^2, log theta_1..d, log sigma_g^2, log phi, log sigma_eps^2)
  Eigen::VectorXd to_vector() const {
    const auto d = theta.size();
    Eigen::VectorXd v(d + 5);
    v(0) = beta;
    v(1) = std::log(sigma_f_sq);
    v.segment(2, d) = theta.array().log().matrix();
    v(d + 2) = std::log(g.sigma_g_sq);
    v(d + 3) = std::log(g.phi);
    v(d + 4) = std::log(g.sigma_eps_sq);
    return v;
  }

  static JointHyperparams from_vector(const Eigen::VectorXd &v) {
    const auto d = v.size() - 5;
    return {v(0), std::exp(v(1)), v.segment(2, d).array().exp().matrix(),
            GHyperparams{std::exp(v(d + 2)), std::exp(v(d + 3)), std::exp(v(d + 4))}};
  }
};

/// Exact log marginal likelihood of y ~ N(beta 1, K + Q + sigma_eps^2 I) with
/// gradient in the coordinates of JointHyperparams::to_vector. sigma_g^2 = 0
/// is accepted (Q dropped); the log sigma_g^2 component is then 0.
inline LikelihoodValue joint_log_likelihood(const JointHyperparams &p,
                                            const TimeSeriesDataset &data, KernelFamily family,
                                            KernelFamily time_family, bool with_gradient = true,
                                            double jitter = 1e-8) {
  const auto n = data.size();
  const auto d = data.dim();
  if (p.theta.size() != d) throw std::invalid_argument("theta dimension mismatch");
  const KernelSpec spec{family, p.sigma_f_sq, p.theta};
  const TimeKernel q{time_family, p.g.sigma_g_sq, p.g.phi};
  Eigen::MatrixXd K = gram_matrix(spec, data.X());
  Eigen::MatrixXd C = K;
  if (p.g.sigma_g_sq > 0.0) C += time_gram_matrix(q, data.t());
  C.diagonal().array() += p.g.sigma_eps_sq;
  LikelihoodValue out;
  auto fact = factorize_with_jitter(std::move(C), jitter);
  if (!fact) return out;
  const auto &F = fact->factor;
  const Eigen::VectorXd r = data.y().array() - p.beta;
  out.value = -0.5 * F.quad_form(r) - 0.5 * F.log_det() - 0.5 * static_cast<double>(n) * detail::kLog2Pi;
  if (!with_gradient) return out;

  const Eigen::VectorXd alpha = F.solve(r);
  Eigen::MatrixXd W = F.inverse();
  W = alpha * alpha.transpose() - W;
  out.gradient = Eigen::VectorXd::Zero(d + 5);
  out.gradient(0) = alpha.sum();
  const Eigen::VectorXd inv = p.theta.cwiseInverse();
  Eigen::VectorXd z(d);
  double g_f = 0.0, g_g = 0.0, g_phi = 0.0;
  Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(d);
  const auto &ts = data.t();
  for (Eigen::Index j = 0; j < n; ++j) {
    g_f += 0.5 * W(j, j) * K(j, j);
    if (p.g.sigma_g_sq > 0.0) g_g += 0.5 * W(j, j) * p.g.sigma_g_sq;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double w = W(i, j);
      double r2 = 0.0;
      for (Eigen::Index l = 0; l < d; ++l) {
        z(l) = (data.X()(i, l) - data.X()(j, l)) * inv(l);
        z(l) *= z(l);
        r2 += z(l);
      }
      g_f += w * K(i, j);
      g_theta += (w * p.sigma_f_sq * detail::slope(family, std::sqrt(r2))) * z;
      if (p.g.sigma_g_sq > 0.0) {
        const Eigen::Vector2d gq = time_kernel_grad(q, static_cast<double>(ts[static_cast<std::size_t>(i)]),
                                                    static_cast<double>(ts[static_cast<std::size_t>(j)]));
        g_g += w * gq(0);
        g_phi += w * gq(1);
      }
    }
  }
  out.gradient(1) = g_f;
  out.gradient.segment(2, d) = g_theta;
  out.gradient(d + 2) = g_g;
  out.gradient(d + 3) = g_phi;
  out.gradient(d + 4) = 0.5 * p.g.sigma_eps_sq * W.trace();
  return out;
}

/// Posterior mean of f alone under the joint model,
/// beta + k_f(x)^T [K + Q + sigma_eps^2 I]^{-1} (y - beta 1).
class JointGPModel {
 public:
  JointGPModel(TimeSeriesDataset train, JointHyperparams params, KernelFamily kernel,
               Eigen::VectorXd alpha)
      : train_(std::move(train)),
        params_(std::move(params)),
        kernel_(kernel),
        alpha_(std::move(alpha)),
        inv_theta_(params_.theta.cwiseInverse()) {}

  const JointHyperparams &params() const { return params_; }
  const Eigen::VectorXd &alpha() const { return alpha_; }

  double predict_f(const Eigen::Ref<const Eigen::VectorXd> &x) const {
    if (x.size() != train_.dim()) throw std::invalid_argument("predict_f: dimension mismatch");
    double s = 0.0;
    for (Eigen::Index i = 0; i < train_.size(); ++i) {
      const double r = std::sqrt(detail::scaled_sq_distance(x, train_.X().row(i), inv_theta_));
      s += params_.sigma_f_sq * detail::profile(kernel_, r) * alpha_(i);
    }
    return params_.beta + s;
  }

  Eigen::VectorXd predict_f_batch(const Eigen::MatrixXd &Xs) const {
    Eigen::VectorXd out(Xs.rows());
    for (Eigen::Index i = 0; i < Xs.rows(); ++i) out(i) = predict_f(Xs.row(i).transpose());
    return out;
  }

 private:
  TimeSeriesDataset train_;
  JointHyperparams params_;
  KernelFamily kernel_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd inv_theta_;
};

struct JointFit {
  JointHyperparams params;
  FitDiagnostics diagnostics;

  /// The f-part of the joint estimate in first-stage form; u = g + eps, so
  /// its variance sigma_g^2 + sigma_eps^2 takes the place of sigma_u^2.
  FHyperparams f_params() const {
    return {params.beta, params.sigma_f_sq, params.theta,
            params.g.sigma_g_sq + params.g.sigma_eps_sq};
  }
  GHyperparams g_params() const { return params.g; }
};

/// Direct maximization of the exact likelihood over all hyperparameters.
/// Used only as an experimental baseline.
inline JointFit fit_joint(const TimeSeriesDataset &data, const FitConfig &cfg,
                          std::optional<double> phi_init = std::nullopt) {
  const auto n = data.size();
  const auto d = data.dim();
  if (n > cfg.joint_max_n) {
    throw DataError("joint fit limited to N <= " + std::to_string(cfg.joint_max_n) + " (got " +
                    std::to_string(n) + ")");
  }
  if (n < d + 5) throw DataError("joint fit needs at least d + 5 observations");
  const double scale = detail::variance_scale(data.y());
  const double var = (data.y().array() - data.y().mean()).square().sum() /
                     static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  const double v0 = std::max(var / 3.0, cfg.variance_lower * scale);
  JointHyperparams init;
  init.beta = data.y().mean();
  init.sigma_f_sq = v0;
  init.theta = Eigen::VectorXd::Constant(d, std::sqrt(static_cast<double>(d)));
  init.g = GHyperparams{v0, phi_init.value_or(5.0), v0};

  const double inf = std::numeric_limits<double>::infinity();
  detail::Box box{Eigen::VectorXd(d + 5), Eigen::VectorXd(d + 5)};
  box.lo(0) = -inf;
  box.hi(0) = inf;
  const double vlo = std::log(cfg.variance_lower * scale), vhi = std::log(cfg.variance_upper * scale);
  box.lo(1) = box.lo(d + 2) = box.lo(d + 4) = vlo;
  box.hi(1) = box.hi(d + 2) = box.hi(d + 4) = vhi;
  box.lo.segment(2, d).setConstant(std::log(cfg.lengthscale_lower));
  box.hi.segment(2, d).setConstant(std::log(cfg.lengthscale_upper));
  box.lo(d + 3) = std::log(0.05);
  box.hi(d + 3) = std::log(1e4);

  std::vector<Eigen::Index> perturbed;
  for (Eigen::Index i = 1; i < d + 5; ++i) perturbed.push_back(i);
  const auto loglik = [&](const Eigen::VectorXd &x) {
    return joint_log_likelihood(JointHyperparams::from_vector(x), data, cfg.kernel,
                                cfg.time_kernel, true, cfg.jitter);
  };
  JointFit fit;
  const auto best = detail::maximize_multistart(loglik, init.to_vector(), box, perturbed,
                                                static_cast<double>(n), cfg.optimizer,
                                                cfg.optimizer.max_iterations,
                                                fit.diagnostics.restarts,
                                                fit.diagnostics.evaluations);
  fit.params = JointHyperparams::from_vector(best.x);
  fit.diagnostics.objective = -best.value * static_cast<double>(n);
  fit.diagnostics.gradient_norm = best.projected_gradient_norm;
  fit.diagnostics.termination = best.termination;
  fit.diagnostics.iterations = best.iterations;
  fit.diagnostics.mean_bin_size = static_cast<double>(n);
  return fit;
}

/// Joint hyperparameters plugged into the recombined f-predictor (T = 1),
/// the same prediction path the thinned estimate uses.
inline TempGPModel joint_plugin_model(const TimeSeriesDataset &data, const JointFit &fit,
                                      const FitConfig &cfg) {
  return TempGPModel::build(data, fit.f_params(), 1, cfg);
}

inline JointGPModel joint_posterior_model(const TimeSeriesDataset &data, const JointFit &fit,
                                          const FitConfig &cfg) {
  const auto &p = fit.params;
  const KernelSpec spec{cfg.kernel, p.sigma_f_sq, p.theta};
  Eigen::MatrixXd C = gram_matrix(spec, data.X());
  if (p.g.sigma_g_sq > 0.0) {
    C += time_gram_matrix(TimeKernel{cfg.time_kernel, p.g.sigma_g_sq, p.g.phi}, data.t());
  }
  C.diagonal().array() += p.g.sigma_eps_sq;
  auto fact = factorize_with_jitter(std::move(C), cfg.jitter);
  if (!fact) throw NumericalError("joint covariance is not positive definite");
  Eigen::VectorXd alpha = fact->factor.solve(Eigen::VectorXd(data.y().array() - p.beta));
  return JointGPModel(data, p, cfg.kernel, std::move(alpha));
}

}  // namespace tempgp
