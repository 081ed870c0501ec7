#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>

namespace tempgp {

/// Objective for minimization: returns f(x) and writes the gradient.
/// A non-finite return value marks x as infeasible (e.g. a covariance matrix
/// that failed to factorize); the line search backs off from such points.
using Objective = std::function<double(const Eigen::VectorXd &x, Eigen::VectorXd &grad)>;

enum class Termination { GradientTolerance, FunctionTolerance, MaxIterations, LineSearchFailure };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::GradientTolerance: return "gradient_tolerance";
    case Termination::FunctionTolerance: return "function_tolerance";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::LineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

struct LbfgsSettings {
  int max_iterations = 200;
  // Infinity norm of the projected gradient.
  double gradient_tolerance = 1e-5;
  // Relative decrease of f below which two consecutive steps end the run.
  double function_tolerance = 1e-12;
  int history = 10;
  int max_backtracks = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  double projected_gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  Termination termination = Termination::MaxIterations;
  bool converged() const {
    return termination == Termination::GradientTolerance ||
           termination == Termination::FunctionTolerance;
  }
};

namespace detail {

inline Eigen::VectorXd project(const Eigen::VectorXd &x, const Eigen::VectorXd &lo,
                               const Eigen::VectorXd &hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

inline double projected_gradient_norm(const Eigen::VectorXd &x, const Eigen::VectorXd &g,
                                      const Eigen::VectorXd &lo, const Eigen::VectorXd &hi) {
  return (project(x - g, lo, hi) - x).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Projected L-BFGS for box-constrained minimization. Variables sitting on a
/// bound with the gradient pushing outward are frozen for the step; the
/// quasi-Newton direction is computed on the remaining free variables and the
/// Armijo backtracking search runs along the projected path.
inline LbfgsResult minimize_lbfgs(const Objective &fn, Eigen::VectorXd x0,
                                  const Eigen::VectorXd &lo, const Eigen::VectorXd &hi,
                                  const LbfgsSettings &settings = {}) {
  const auto n = x0.size();
  LbfgsResult res;
  res.x = detail::project(x0, lo, hi);
  res.gradient = Eigen::VectorXd::Zero(n);
  res.value = fn(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.value)) {
    res.termination = Termination::LineSearchFailure;
    return res;
  }

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  int small_steps = 0;
  const double eps_bound = 1e-12;

  for (res.iterations = 0; res.iterations < settings.max_iterations; ++res.iterations) {
    res.projected_gradient_norm =
        detail::projected_gradient_norm(res.x, res.gradient, lo, hi);
    if (res.projected_gradient_norm <= settings.gradient_tolerance) {
      res.termination = Termination::GradientTolerance;
      return res;
    }

    Eigen::Array<bool, Eigen::Dynamic, 1> free(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = res.x(i) <= lo(i) + eps_bound && res.gradient(i) > 0.0;
      const bool at_hi = res.x(i) >= hi(i) - eps_bound && res.gradient(i) < 0.0;
      free(i) = !(at_lo || at_hi);
    }
    auto mask = [&](Eigen::VectorXd v) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!free(i)) v(i) = 0.0;
      }
      return v;
    };

    // Two-loop recursion restricted to the free variables.
    Eigen::VectorXd q = mask(res.gradient);
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[static_cast<std::size_t>(k)] =
          rho_hist[static_cast<std::size_t>(k)] * mask(s_hist[static_cast<std::size_t>(k)]).dot(q);
      q -= alpha[static_cast<std::size_t>(k)] * mask(y_hist[static_cast<std::size_t>(k)]);
    }
    if (!s_hist.empty()) {
      const auto &s = s_hist.back();
      const auto &y = y_hist.back();
      q *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * mask(y_hist[k]).dot(q);
      q += (alpha[k] - beta) * mask(s_hist[k]);
    }
    Eigen::VectorXd dir = -mask(q);
    double slope = dir.dot(res.gradient);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -mask(res.gradient);
      slope = dir.dot(res.gradient);
      if (!(slope < 0.0)) {
        res.termination = Termination::GradientTolerance;
        return res;
      }
    }

    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / std::max(dir.cwiseAbs().maxCoeff(), 1e-12));

    Eigen::VectorXd x_new, g_new(n);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < settings.max_backtracks; ++bt) {
      x_new = detail::project(res.x + step * dir, lo, hi);
      f_new = fn(x_new, g_new);
      ++res.evaluations;
      const double decrease = res.gradient.dot(x_new - res.x);
      if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!s_hist.empty()) {
        // Retry once from steepest descent before giving up.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      res.termination = Termination::LineSearchFailure;
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > settings.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double rel = (res.value - f_new) / std::max({std::abs(res.value), std::abs(f_new), 1.0});
    res.x = x_new;
    res.value = f_new;
    res.gradient = g_new;
    small_steps = rel <= settings.function_tolerance ? small_steps + 1 : 0;
    if (small_steps >= 2) {
      res.projected_gradient_norm =
          detail::projected_gradient_norm(res.x, res.gradient, lo, hi);
      res.termination = res.projected_gradient_norm <= settings.gradient_tolerance
                            ? Termination::GradientTolerance
                            : Termination::FunctionTolerance;
      return res;
    }
  }
  res.projected_gradient_norm = detail::projected_gradient_norm(res.x, res.gradient, lo, hi);
  res.termination = res.projected_gradient_norm <= settings.gradient_tolerance
                        ? Termination::GradientTolerance
                        : Termination::MaxIterations;
  return res;
}

}  // namespace tempgp
