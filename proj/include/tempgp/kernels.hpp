#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

#include "tempgp/error.hpp"

namespace tempgp {

enum class KernelFamily { SquaredExponential, Matern32, Matern52, Exponential };

inline std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::SquaredExponential: return "SquaredExponential";
    case KernelFamily::Matern32: return "Matern32";
    case KernelFamily::Matern52: return "Matern52";
    case KernelFamily::Exponential: return "Exponential";
  }
  return "unknown";
}

inline KernelFamily parse_kernel_family(std::string_view s) {
  if (s == "SquaredExponential" || s == "se" || s == "squared_exponential") {
    return KernelFamily::SquaredExponential;
  }
  if (s == "Matern32" || s == "matern32") return KernelFamily::Matern32;
  if (s == "Matern52" || s == "matern52") return KernelFamily::Matern52;
  if (s == "Exponential" || s == "exponential" || s == "exp") return KernelFamily::Exponential;
  throw ConfigError("unknown kernel family '" + std::string(s) + "'");
}

/// Stationary covariance sigma^2 * h(r) with the anisotropic scaled distance
/// r = sqrt(sum_l ((x_l - x'_l) / theta_l)^2).
struct KernelSpec {
  KernelFamily family = KernelFamily::Matern32;
  double variance = 1.0;
  Eigen::VectorXd lengthscales = Eigen::VectorXd::Ones(1);

  void validate() const {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
      throw std::invalid_argument("kernel variance must be positive and finite");
    }
    if (lengthscales.size() < 1) throw std::invalid_argument("kernel needs a lengthscale");
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
      if (!(lengthscales(i) > 0.0) || !std::isfinite(lengthscales(i))) {
        throw std::invalid_argument("kernel lengthscales must be positive and finite");
      }
    }
  }
};

namespace detail {

inline constexpr double kSqrt3 = 1.7320508075688772;
inline constexpr double kSqrt5 = 2.2360679774997898;

// Correlation profile h(r), h(0) = 1.
inline double profile(KernelFamily f, double r) {
  switch (f) {
    case KernelFamily::SquaredExponential: return std::exp(-0.5 * r * r);
    case KernelFamily::Matern32: {
      const double a = kSqrt3 * r;
      return (1.0 + a) * std::exp(-a);
    }
    case KernelFamily::Matern52: {
      const double a = kSqrt5 * r;
      return (1.0 + a + a * a / 3.0) * std::exp(-a);
    }
    case KernelFamily::Exponential: return std::exp(-r);
  }
  return 0.0;
}

// -h'(r) / r, the factor shared by every log-lengthscale derivative:
// d k / d log(theta_l) = sigma^2 * slope(r) * ((x_l - x'_l) / theta_l)^2.
// The exponential profile is not differentiable at r = 0; callers multiply by
// a squared component that vanishes at least as fast as r^2, so 0 is used.
inline double slope(KernelFamily f, double r) {
  switch (f) {
    case KernelFamily::SquaredExponential: return std::exp(-0.5 * r * r);
    case KernelFamily::Matern32: return 3.0 * std::exp(-kSqrt3 * r);
    case KernelFamily::Matern52: {
      const double a = kSqrt5 * r;
      return (5.0 / 3.0) * (1.0 + a) * std::exp(-a);
    }
    case KernelFamily::Exponential: return r > 0.0 ? std::exp(-r) / r : 0.0;
  }
  return 0.0;
}

template <typename A, typename B>
double scaled_sq_distance(const A &x, const B &xp, const Eigen::VectorXd &inv_theta) {
  double s = 0.0;
  for (Eigen::Index l = 0; l < inv_theta.size(); ++l) {
    const double z = (x(l) - xp(l)) * inv_theta(l);
    s += z * z;
  }
  return s;
}

inline void check_dims(const KernelSpec &spec, Eigen::Index a, Eigen::Index b) {
  if (a != spec.lengthscales.size() || b != spec.lengthscales.size()) {
    throw std::invalid_argument("input dimension does not match lengthscale count");
  }
}

}  // namespace detail

inline double scaled_distance(const KernelSpec &spec, const Eigen::Ref<const Eigen::VectorXd> &x,
                              const Eigen::Ref<const Eigen::VectorXd> &xp) {
  detail::check_dims(spec, x.size(), xp.size());
  const Eigen::VectorXd inv = spec.lengthscales.cwiseInverse();
  return std::sqrt(detail::scaled_sq_distance(x, xp, inv));
}

inline double kernel_eval(const KernelSpec &spec, const Eigen::Ref<const Eigen::VectorXd> &x,
                          const Eigen::Ref<const Eigen::VectorXd> &xp) {
  spec.validate();
  return spec.variance * detail::profile(spec.family, scaled_distance(spec, x, xp));
}

/// Derivatives of k(x, x') with respect to (log sigma^2, log theta_1..d).
inline Eigen::VectorXd kernel_grad(const KernelSpec &spec,
                                   const Eigen::Ref<const Eigen::VectorXd> &x,
                                   const Eigen::Ref<const Eigen::VectorXd> &xp) {
  spec.validate();
  detail::check_dims(spec, x.size(), xp.size());
  const auto d = spec.lengthscales.size();
  const Eigen::VectorXd inv = spec.lengthscales.cwiseInverse();
  const double r = std::sqrt(detail::scaled_sq_distance(x, xp, inv));
  Eigen::VectorXd g(d + 1);
  g(0) = spec.variance * detail::profile(spec.family, r);
  const double s = spec.variance * detail::slope(spec.family, r);
  for (Eigen::Index l = 0; l < d; ++l) {
    const double z = (x(l) - xp(l)) * inv(l);
    g(l + 1) = s * z * z;
  }
  return g;
}

/// Cross covariance between the rows of A (n x d) and B (m x d).
inline Eigen::MatrixXd cross_covariance(const KernelSpec &spec, const Eigen::MatrixXd &A,
                                        const Eigen::MatrixXd &B) {
  spec.validate();
  detail::check_dims(spec, A.cols(), B.cols());
  const Eigen::VectorXd inv = spec.lengthscales.cwiseInverse();
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double r = std::sqrt(detail::scaled_sq_distance(A.row(i), B.row(j), inv));
      K(i, j) = spec.variance * detail::profile(spec.family, r);
    }
  }
  return K;
}

inline Eigen::MatrixXd gram_matrix(const KernelSpec &spec, const Eigen::MatrixXd &X) {
  spec.validate();
  if (X.rows() < 1) throw std::invalid_argument("gram matrix needs at least one row");
  detail::check_dims(spec, X.cols(), X.cols());
  const Eigen::VectorXd inv = spec.lengthscales.cwiseInverse();
  const auto n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = spec.variance;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double r = std::sqrt(detail::scaled_sq_distance(X.row(i), X.row(j), inv));
      K(i, j) = K(j, i) = spec.variance * detail::profile(spec.family, r);
    }
  }
  return K;
}

// ---------------------------------------------------------------------------
// Time kernel q(t, t') = sigma_g^2 h(|t - t'| / phi) for the temporal component.

struct TimeKernel {
  KernelFamily family = KernelFamily::Matern32;
  double variance = 1.0;
  double lengthscale = 1.0;
};

inline double time_kernel_eval(const TimeKernel &q, double t, double tp) {
  return q.variance * detail::profile(q.family, std::abs(t - tp) / q.lengthscale);
}

/// Derivatives of q(t, t') with respect to (log sigma_g^2, log phi).
inline Eigen::Vector2d time_kernel_grad(const TimeKernel &q, double t, double tp) {
  const double r = std::abs(t - tp) / q.lengthscale;
  return {q.variance * detail::profile(q.family, r),
          q.variance * detail::slope(q.family, r) * r * r};
}

template <typename TimeRange>
Eigen::MatrixXd time_gram_matrix(const TimeKernel &q, const TimeRange &times) {
  const auto n = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd Q(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Q(j, j) = q.variance;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      Q(i, j) = Q(j, i) = time_kernel_eval(q, static_cast<double>(times[i]),
                                           static_cast<double>(times[j]));
    }
  }
  return Q;
}

}  // namespace tempgp
