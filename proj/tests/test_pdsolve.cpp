#include <gtest/gtest.h>

#include <random>

#include "tempgp/pdsolve.hpp"

using namespace tempgp;

namespace {

Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64 &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd B(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) B(i, j) = normal(rng);
  }
  Eigen::MatrixXd A = B * B.transpose() / static_cast<double>(n);
  A.diagonal().array() += 0.5;
  return A;
}

}  // namespace

TEST(PDSolve, IdentityFactorIsIdentity) {
  const auto F = PDFactorization::factorize(Eigen::MatrixXd::Identity(3, 3));
  EXPECT_TRUE(F.lower().isApprox(Eigen::MatrixXd::Identity(3, 3)));
  EXPECT_EQ(F.log_det(), 0.0);
  const Eigen::Vector3d b(1, -2, 3);
  EXPECT_TRUE(F.solve(b).isApprox(b));
}

TEST(PDSolve, TwoByTwoClosedForm) {
  Eigen::Matrix2d A;
  A << 2, 1, 1, 2;
  const auto F = PDFactorization::factorize(A);
  const Eigen::Vector2d x = F.solve(Eigen::Vector2d(1, 1));
  EXPECT_NEAR(x(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(x(1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(F.log_det(), std::log(3.0), 1e-15);
  EXPECT_NEAR(F.quad_form(Eigen::Vector2d(1, 1)), 2.0 / 3.0, 1e-15);
}

TEST(PDSolve, IndefiniteIsTypedError) {
  Eigen::Matrix2d A;
  A << 1, 2, 2, 1;
  EXPECT_THROW(PDFactorization::factorize(A), NotPositiveDefinite);
  EXPECT_FALSE(PDFactorization::try_factorize(A).has_value());
  try {
    PDFactorization::factorize(A);
  } catch (const NumericalError &) {
    SUCCEED();
  }
}

TEST(PDSolve, DiagonalAndDimensionMismatch) {
  const Eigen::Vector3d d(2, 3, 5);
  const auto F = PDFactorization::factorize(Eigen::MatrixXd(d.asDiagonal()));
  const Eigen::Vector3d b(4, 9, 10);
  EXPECT_TRUE(F.solve(b).isApprox(b.cwiseQuotient(d)));
  EXPECT_NEAR(F.log_det(), std::log(30.0), 1e-14);
  EXPECT_THROW(F.solve(Eigen::Vector2d(1, 1)), std::invalid_argument);
  Eigen::Matrix2d diag;
  diag << 2, 0, 0, 3;
  EXPECT_NEAR(PDFactorization::factorize(diag).log_det(), std::log(6.0), 1e-15);
}

TEST(PDSolve, AsymmetricInputRejected) {
  Eigen::Matrix2d A;
  A << 2, 1, 0.5, 2;
  EXPECT_THROW(PDFactorization::factorize(A), std::invalid_argument);
}

TEST(PDSolve, RandomSpdSolveLogDetReconstruct) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index n : {1, 2, 5, 10, 20, 50, 120, 200}) {
    const auto A = random_spd(n, rng);
    const auto F = PDFactorization::factorize(A);
    Eigen::MatrixXd b(n, 3);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = normal(rng);
    const Eigen::MatrixXd x = F.solve(b);
    EXPECT_LE((A * x - b).norm(), 1e-8 * b.norm()) << n;
    const Eigen::MatrixXd direct = A.inverse() * b;
    EXPECT_LE((x - direct).norm(), 1e-8 * direct.norm());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    EXPECT_NEAR(F.log_det(), es.eigenvalues().array().log().sum(), 1e-9);

    const Eigen::MatrixXd L = F.lower();
    EXPECT_LE((L * L.transpose() - A).norm(), 1e-10 * A.norm());

    const Eigen::VectorXd v = b.col(0);
    EXPECT_NEAR(F.quad_form(v), v.dot(A.ldlt().solve(v)), 1e-9 * std::abs(F.quad_form(v)));

    EXPECT_LE((F.inverse() * A - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-9 * n);
  }
}

TEST(PDSolve, JitterRescuesSemidefiniteMatrices) {
  Eigen::Matrix2d A;
  A << 1, 1, 1, 1;
  EXPECT_FALSE(PDFactorization::try_factorize(A).has_value());
  const auto jf = factorize_with_jitter(A, 1e-8);
  ASSERT_TRUE(jf.has_value());
  EXPECT_NEAR(jf->jitter, 1e-8, 1e-20);
  EXPECT_FALSE(factorize_with_jitter(A, 0.0).has_value());
  const auto ok = factorize_with_jitter(Eigen::Matrix2d::Identity(), 1e-8);
  ASSERT_TRUE(ok.has_value());
  EXPECT_EQ(ok->jitter, 0.0);
}
