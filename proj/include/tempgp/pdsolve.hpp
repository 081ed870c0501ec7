#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include "tempgp/error.hpp"

namespace tempgp {

/// Cholesky factorization A = L L^T of a symmetric positive-definite matrix.
class PDFactorization {
 public:
  /// Returns nullopt when A is not positive definite to working precision.
  static std::optional<PDFactorization> try_factorize(const Eigen::MatrixXd &A) {
    check_symmetric(A);
    PDFactorization f;
    f.llt_.compute(A);
    if (f.llt_.info() != Eigen::Success) return std::nullopt;
    const auto diag = f.llt_.matrixLLT().diagonal();
    if (!diag.allFinite() || (diag.array() <= 0.0).any()) return std::nullopt;
    return f;
  }

  static PDFactorization factorize(const Eigen::MatrixXd &A) {
    auto f = try_factorize(A);
    if (!f) throw NotPositiveDefinite(std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    return std::move(*f);
  }

  Eigen::Index size() const { return llt_.matrixLLT().rows(); }

  Eigen::MatrixXd lower() const { return llt_.matrixL(); }

  template <typename Rhs>
  Eigen::Matrix<double, Eigen::Dynamic, Rhs::ColsAtCompileTime> solve(
      const Eigen::MatrixBase<Rhs> &b) const {
    if (b.rows() != size()) throw std::invalid_argument("solve: dimension mismatch");
    return llt_.solve(b);
  }

  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

  /// b^T A^{-1} b through one triangular solve.
  double quad_form(const Eigen::Ref<const Eigen::VectorXd> &b) const {
    if (b.size() != size()) throw std::invalid_argument("quad_form: dimension mismatch");
    const Eigen::VectorXd z = llt_.matrixL().solve(b);
    return z.squaredNorm();
  }

  /// Explicit inverse, needed only for the trace terms of likelihood gradients.
  /// Computed as L^{-T} L^{-1} with recursive blocked kernels.
  Eigen::MatrixXd inverse() const {
    Eigen::MatrixXd W = llt_.matrixLLT();
    invert_lower_in_place(W);
    lower_gram_in_place(W);
    W.triangularView<Eigen::StrictlyUpper>() = W.transpose();
    return W;
  }

  Eigen::MatrixXd reconstruct() const { return llt_.reconstructedMatrix(); }

 private:
  static void check_symmetric(const Eigen::MatrixXd &A) {
    if (A.rows() != A.cols()) throw std::invalid_argument("factorize: matrix is not square");
    if (A.rows() == 0) throw std::invalid_argument("factorize: empty matrix");
    const double scale = A.cwiseAbs().maxCoeff();
    const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
    if (!(asym <= 1e-12 * scale)) throw std::invalid_argument("factorize: matrix not symmetric");
  }

  // In place: lower triangle of L becomes L^{-1}.
  static void invert_lower_in_place(Eigen::Ref<Eigen::MatrixXd> L) {
    const auto n = L.rows();
    if (n <= 64) {
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      L.triangularView<Eigen::Lower>().solveInPlace(I);
      L.triangularView<Eigen::Lower>() = I;
      return;
    }
    const auto h = n / 2;
    auto A = L.topLeftCorner(h, h);
    auto B = L.bottomLeftCorner(n - h, h);
    auto D = L.bottomRightCorner(n - h, n - h);
    invert_lower_in_place(A);
    invert_lower_in_place(D);
    const Eigen::MatrixXd BA = B * A.triangularView<Eigen::Lower>();
    B.noalias() = -(D.triangularView<Eigen::Lower>() * BA);
  }

  // In place: lower triangle of L becomes the lower triangle of L^T L.
  static void lower_gram_in_place(Eigen::Ref<Eigen::MatrixXd> L) {
    const auto n = L.rows();
    if (n <= 64) {
      const Eigen::MatrixXd T = L.triangularView<Eigen::Lower>();
      const Eigen::MatrixXd G = T.transpose() * T;
      L.triangularView<Eigen::Lower>() = G;
      return;
    }
    const auto h = n / 2;
    auto P = L.topLeftCorner(h, h);
    auto Q = L.bottomLeftCorner(n - h, h);
    auto R = L.bottomRightCorner(n - h, n - h);
    const Eigen::MatrixXd QtQ = Q.transpose() * Q;
    lower_gram_in_place(P);
    P.triangularView<Eigen::Lower>() += QtQ;
    const Eigen::MatrixXd RtQ = R.triangularView<Eigen::Lower>().transpose() * Q;
    lower_gram_in_place(R);
    Q = RtQ;
  }

  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct JitteredFactorization {
  PDFactorization factor;
  double jitter = 0.0;
};

/// Factorizes A; if that fails, retries once with jitter_scale * mean(diag A)
/// added to the diagonal. Returns nullopt when both attempts fail.
inline std::optional<JitteredFactorization> factorize_with_jitter(Eigen::MatrixXd A,
                                                                  double jitter_scale) {
  if (auto f = PDFactorization::try_factorize(A)) return JitteredFactorization{std::move(*f), 0.0};
  if (!(jitter_scale > 0.0)) return std::nullopt;
  const double jitter = jitter_scale * A.diagonal().mean();
  if (!(jitter > 0.0) || !std::isfinite(jitter)) return std::nullopt;
  A.diagonal().array() += jitter;
  if (auto f = PDFactorization::try_factorize(A)) return JitteredFactorization{std::move(*f), jitter};
  return std::nullopt;
}

}  // namespace tempgp
