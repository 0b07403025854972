#include "stabnet/linalg.hpp"

#include <cmath>

#include <Eigen/Core>
#include <gtest/gtest.h>

#include "stabnet/errors.hpp"
#include "stabnet/rng.hpp"
#include "test_util.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace la = stabnet::linalg;

TEST(SymEig, AscendingAndReconstructs) {
  stabnet::Rng rng(11);
  const MatrixXd s = la::symmetric_part(stabnet::normal_matrix(rng, 5, 5));
  const la::SymEig eig = la::sym_eig(s);
  for (int i = 1; i < 5; ++i) EXPECT_LE(eig.values(i - 1), eig.values(i));
  const MatrixXd back = eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
  EXPECT_LT((back - s).norm(), 1e-12 * std::max(1.0, s.norm()));
}

TEST(PositiveDefinite, Classification) {
  stabnet::Rng rng(12);
  EXPECT_TRUE(la::is_positive_definite(testutil::random_pd(rng, 4)));
  MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  EXPECT_FALSE(la::is_positive_definite(indef));
  const MatrixXd rank1 = MatrixXd::Ones(3, 3);  // PSD, singular
  EXPECT_FALSE(la::is_positive_definite(rank1));
  EXPECT_FALSE(la::is_positive_definite(MatrixXd::Zero(2, 2)));
  EXPECT_FALSE(la::is_positive_definite(MatrixXd::Ones(2, 3)));
}

TEST(Lyapunov, WeightedSolveSatisfiesEquation) {
  stabnet::Rng rng(13);
  const int n = 6;
  const MatrixXd sigma = testutil::random_pd(rng, n);
  VectorXd gamma(n);
  for (int i = 0; i < n; ++i) gamma(i) = 0.5 + rng.uniform() * 1.5;
  const MatrixXd h = la::symmetric_part(stabnet::normal_matrix(rng, n, n));
  const MatrixXd x = la::lyapunov_weighted_solve(sigma, gamma, h);
  const MatrixXd lhs =
      sigma * x * gamma.asDiagonal() + MatrixXd(gamma.asDiagonal()) * x * sigma;
  EXPECT_LT((lhs - h).norm(), 1e-10 * std::max(1.0, h.norm()));
  EXPECT_LT((x - x.transpose()).norm(), 1e-12 * std::max(1.0, x.norm()));
}

TEST(Lyapunov, EigAndKroneckerRoutesAgree) {
  stabnet::Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 3 + trial;
    const MatrixXd sigma = testutil::random_pd(rng, n);
    VectorXd gamma(n);
    for (int i = 0; i < n; ++i) gamma(i) = 0.5 + rng.uniform() * 1.5;
    const MatrixXd h = la::symmetric_part(stabnet::normal_matrix(rng, n, n));
    const MatrixXd a = la::lyapunov_weighted_solve(sigma, gamma, h);
    const MatrixXd b = la::lyapunov_kron_solve(sigma, gamma, h);
    EXPECT_LT((a - b).norm(), 1e-10 * std::max(1.0, a.norm()));
  }
}

TEST(Lyapunov, MinimumNormOnSingularCovariance) {
  // Rank-1 Sigma: consistent right-hand sides are still solved exactly.
  stabnet::Rng rng(15);
  const int n = 4;
  const VectorXd q = stabnet::normal_vector(rng, n);
  const MatrixXd sigma = q * q.transpose();
  const VectorXd gamma = VectorXd::Ones(n);
  const MatrixXd y = la::symmetric_part(stabnet::normal_matrix(rng, n, n));
  const MatrixXd h = sigma * y + y * sigma;  // consistent by construction
  const MatrixXd x = la::lyapunov_weighted_solve(sigma, gamma, h);
  EXPECT_LT((sigma * x + x * sigma - h).norm(), 1e-8 * std::max(1.0, h.norm()));
}

TEST(Lyapunov, InputGuards) {
  const MatrixXd id = MatrixXd::Identity(2, 2);
  EXPECT_THROW(la::lyapunov_weighted_solve(id, VectorXd::Ones(3), id), stabnet::InputError);
  EXPECT_THROW(la::lyapunov_weighted_solve(id, -VectorXd::Ones(2), id), stabnet::InputError);
  EXPECT_THROW(la::lyapunov_weighted_solve(MatrixXd::Ones(2, 3), VectorXd::Ones(2), id),
               stabnet::InputError);
}

TEST(SimplexProject, KnownCases) {
  VectorXd v(2);
  v << 0.9, -0.5;
  const VectorXd p = la::simplex_project(v);
  EXPECT_NEAR(p(0), 1.0, 1e-14);
  EXPECT_NEAR(p(1), 0.0, 1e-14);

  VectorXd w(2);
  w << 0.2, 0.3;
  const VectorXd pw = la::simplex_project(w);
  EXPECT_NEAR(pw(0), 0.45, 1e-14);
  EXPECT_NEAR(pw(1), 0.55, 1e-14);

  VectorXd onsimplex(3);
  onsimplex << 0.2, 0.5, 0.3;
  EXPECT_LT((la::simplex_project(onsimplex) - onsimplex).norm(), 1e-14);

  VectorXd neg(3);
  neg << -5.0, -4.0, -6.0;
  const VectorXd pn = la::simplex_project(neg);
  EXPECT_NEAR(pn(1), 1.0, 1e-14);
  EXPECT_NEAR(pn(0), 0.0, 1e-14);
  EXPECT_NEAR(pn(2), 0.0, 1e-14);

  EXPECT_THROW(la::simplex_project(VectorXd()), stabnet::InputError);
}

TEST(SimplexProject, FeasibleAndNearest) {
  stabnet::Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd v = 3.0 * stabnet::normal_vector(rng, 6);
    const VectorXd p = la::simplex_project(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    // Nearest-point property versus random feasible competitors.
    for (int c = 0; c < 10; ++c) {
      VectorXd q(6);
      for (int i = 0; i < 6; ++i) q(i) = rng.uniform();
      q /= q.sum();
      EXPECT_LE((v - p).squaredNorm(), (v - q).squaredNorm() + 1e-12);
    }
  }
}

TEST(SpectrahedronProject, ShiftBeforeClip) {
  // Eigenvalues (0.9, -0.5): the nearest unit-trace PSD point has spectrum
  // (1, 0), not the (0.95, 0.05) produced by clipping before the trace shift.
  MatrixXd s(2, 2);
  s << 0.9, 0.0, 0.0, -0.5;
  const MatrixXd p = la::spectrahedron_project(s);
  MatrixXd expected(2, 2);
  expected << 1.0, 0.0, 0.0, 0.0;
  EXPECT_LT((p - expected).norm(), 1e-12);
}

TEST(SpectrahedronProject, FeasibleIdempotentNearest) {
  stabnet::Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd s = la::symmetric_part(stabnet::normal_matrix(rng, 4, 4));
    const MatrixXd p = la::spectrahedron_project(s);
    EXPECT_NEAR(p.trace(), 1.0, 1e-12);
    EXPECT_GE(la::sym_eig(p).values(0), -1e-12);
    EXPECT_LT((la::spectrahedron_project(p) - p).norm(), 1e-10);
    // Never farther than competitors drawn inside the feasible set.
    for (int c = 0; c < 5; ++c) {
      MatrixXd q = testutil::random_pd(rng, 4);
      q /= q.trace();
      EXPECT_LE((s - p).squaredNorm(), (s - q).squaredNorm() + 1e-10);
    }
  }
}

TEST(EigenRange, DenseAndPowerAgree) {
  stabnet::Rng rng(18);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXd s = la::symmetric_part(stabnet::normal_matrix(rng, 7, 7));
    const la::EigenRange dense = la::eigen_range_dense(s);
    const la::EigenRange power = la::eigen_range_power(s);
    const double scale = std::max(std::abs(dense.min), std::abs(dense.max));
    EXPECT_NEAR(dense.max, power.max, 1e-8 * std::max(1.0, scale));
    EXPECT_NEAR(dense.min, power.min, 1e-8 * std::max(1.0, scale));
    EXPECT_NEAR(la::lambda_max_power(s + 10.0 * MatrixXd::Identity(7, 7)) - 10.0, dense.max,
                1e-8 * std::max(1.0, scale));
  }
}

}  // namespace
