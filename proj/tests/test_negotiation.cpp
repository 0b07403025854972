#include "stabnet/negotiation.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <gtest/gtest.h>

#include "stabnet/errors.hpp"
#include "stabnet/rng.hpp"
#include "stabnet/stability.hpp"
#include "test_util.hpp"

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using stabnet::NetworkSetting;
using stabnet::PriceMatrix;

// Free-pair coordinates of a price matrix, in free_pairs order.
VectorXd coords(const NetworkSetting& s, const PriceMatrix& p) {
  const auto pairs = stabnet::free_pairs(s);
  VectorXd v(static_cast<int>(pairs.size()));
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    v(static_cast<int>(r)) = p(pairs[r].first, pairs[r].second);
  }
  return v;
}

TEST(NegotiatePairPrice, TwoFirmHandValue) {
  const NetworkSetting s = testutil::two_firm();
  const PriceMatrix zero(2);
  EXPECT_NEAR(stabnet::negotiate_pair_price(s, zero, 0, 1), 5.0 / 3.0, 1e-12);
  // Swapping the arguments negates the result.
  EXPECT_NEAR(stabnet::negotiate_pair_price(s, zero, 1, 0), -5.0 / 3.0, 1e-12);
  // Stable prices are a fixed point.
  PriceMatrix stable(2);
  stable.set(0, 1, 5.0 / 3.0);
  EXPECT_NEAR(stabnet::negotiate_pair_price(s, stable, 0, 1), 5.0 / 3.0, 1e-12);
  EXPECT_THROW(stabnet::negotiate_pair_price(s, zero, 0, 0), stabnet::InputError);
}

TEST(NegotiationStep, TwoFirmOneShotAndEtaZero) {
  const NetworkSetting s = testutil::two_firm();
  const PriceMatrix zero(2);
  const PriceMatrix one = stabnet::negotiation_step(s, zero, 1.0);
  EXPECT_NEAR(one(0, 1), 5.0 / 3.0, 1e-12);
  const PriceMatrix same = stabnet::negotiation_step(s, one, 0.0);
  EXPECT_EQ(same(0, 1), one(0, 1));
}

TEST(NegotiationStep, ProhibitedEdgesStayZero) {
  stabnet::Rng rng(31);
  NetworkSetting s = testutil::random_shared_setting(rng, 4);
  s.allowed = {{0, 1, 2}, {0, 1, 2, 3}, {0, 1, 2, 3}, {1, 2, 3}};
  PriceMatrix p(4);
  p.set(0, 1, 0.3);
  const PriceMatrix next = stabnet::negotiation_step(s, p, 0.7);
  EXPECT_EQ(next(0, 3), 0.0);
}

TEST(RunNegotiation, TwoFirmGeometricDecay) {
  const NetworkSetting s = testutil::two_firm();
  const stabnet::NegotiationTrace trace =
      stabnet::run_negotiation(s, PriceMatrix(2), 0.5, 1e-12, 200);
  ASSERT_TRUE(trace.converged);
  ASSERT_TRUE(trace.final.has_value());
  EXPECT_NEAR(trace.final->P(0, 1), 5.0 / 3.0, 1e-9);
  EXPECT_NEAR(trace.final->W(0, 1), 2.0 / 3.0, 1e-9);
  // lambda = 1, so residuals contract with ratio exactly |1 - eta| = 0.5.
  // Ratios of residuals near machine noise carry ~eps/residual of relative
  // error, so only rounds with residuals comfortably above it are checked.
  for (std::size_t t = 1; t < trace.residuals.size(); ++t) {
    if (trace.residuals[t - 1] < 1e-6) break;
    EXPECT_NEAR(trace.residuals[t] / trace.residuals[t - 1], 0.5, 1e-9);
  }
}

TEST(RunNegotiation, StableStartConvergesImmediately) {
  const NetworkSetting s = testutil::two_firm();
  PriceMatrix stable(2);
  stable.set(0, 1, 5.0 / 3.0);
  const stabnet::NegotiationTrace trace = stabnet::run_negotiation(s, stable, 0.8);
  EXPECT_TRUE(trace.converged);
  ASSERT_EQ(trace.residuals.size(), 1u);
  EXPECT_LT(trace.residuals[0], 1e-12);
}

TEST(RunNegotiation, MaxRoundsReportsNonConvergence) {
  const NetworkSetting s = testutil::two_firm();
  const stabnet::NegotiationTrace trace =
      stabnet::run_negotiation(s, PriceMatrix(2), 1e-3, 1e-12, 2);
  EXPECT_FALSE(trace.converged);
  EXPECT_FALSE(trace.final.has_value());
  EXPECT_EQ(trace.prices.size(), 3u);
}

TEST(RateCertificate, TwoFirmAndIdentityCovariance) {
  const stabnet::RateCertificate two = stabnet::rate_certificate(testutil::two_firm());
  EXPECT_NEAR(two.eta_star, 2.0, 1e-12);
  EXPECT_NEAR(two.lambda_min, 1.0, 1e-12);
  EXPECT_NEAR(two.lambda_max, 1.0, 1e-12);
  EXPECT_NEAR(two.alpha(0.9 * two.eta_star), 0.8, 1e-12);
  EXPECT_GE(two.alpha(1.1 * two.eta_star), 1.0);

  // Sigma = I, Gamma = I: restricted operator spectrum is {1}, eta* = 2.
  for (int n : {3, 4, 5, 6}) {
    NetworkSetting s;
    s.n = n;
    s.M = MatrixXd::Constant(n, n, 0.5) + MatrixXd::Identity(n, n);
    s.gamma = VectorXd::Ones(n);
    s.sigmas = {MatrixXd::Identity(n, n)};
    s.allowed = stabnet::full_allowed(n);
    const stabnet::RateCertificate cert = stabnet::rate_certificate(s);
    EXPECT_NEAR(cert.eta_star, 2.0, 1e-10);
    EXPECT_NEAR(cert.lambda_min, 1.0, 1e-10);
    EXPECT_NEAR(cert.lambda_max, 1.0, 1e-10);
  }
}

TEST(RateCertificate, EquicorrelatedThreeAgents) {
  const int n = 3;
  NetworkSetting s;
  s.n = n;
  s.M = MatrixXd::Identity(n, n);
  s.gamma = VectorXd::Ones(n);
  MatrixXd sigma = MatrixXd::Constant(n, n, 0.5);
  sigma.diagonal().setOnes();
  s.sigmas = {sigma};
  s.allowed = stabnet::full_allowed(n);
  const stabnet::RateCertificate cert = stabnet::rate_certificate(s);
  EXPECT_NEAR(cert.eta_star, 1.5, 1e-10);
  EXPECT_NEAR(cert.lambda_max, 4.0 / 3.0, 1e-10);
  EXPECT_NEAR(cert.lambda_min, 5.0 / 6.0, 1e-10);
}

TEST(RateSpectrum, DenseAndPowerRoutesAgree) {
  stabnet::Rng rng(32);
  const NetworkSetting s = testutil::random_shared_setting(rng, 6);
  const auto qs = stabnet::detail::all_q_matrices(s);
  const auto op = stabnet::detail::build_rate_operator(qs, stabnet::free_pairs(s), s.n);
  const auto dense = stabnet::detail::rate_spectrum(op, /*force_power=*/false);
  const auto power = stabnet::detail::rate_spectrum(op, /*force_power=*/true);
  EXPECT_NEAR(dense.max, power.max, 1e-8 * std::max(1.0, std::abs(dense.max)));
  EXPECT_NEAR(dense.min, power.min, 1e-8 * std::max(1.0, std::abs(dense.max)));
}

TEST(RunNegotiation, ConvergesToDirectSolutionBelowThreshold) {
  stabnet::Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const NetworkSetting s = testutil::random_shared_setting(rng, 5);
    const stabnet::RateCertificate cert = stabnet::rate_certificate(s);
    EXPECT_LT(cert.alpha(0.9 * cert.eta_star), 1.0);
    EXPECT_GE(cert.alpha(1.1 * cert.eta_star), 1.0 - 1e-12);
    EXPECT_GE(cert.alpha(0.1 * cert.eta_star), cert.alpha(0.9 * cert.eta_star));

    const stabnet::NegotiationTrace trace =
        stabnet::run_negotiation(s, PriceMatrix(s.n), 0.9 * cert.eta_star, 1e-12, 20000);
    ASSERT_TRUE(trace.converged);
    const stabnet::SolveOutcome direct = stabnet::solve_stable(s);
    ASSERT_EQ(direct.status, stabnet::SolveStatus::Unique);
    EXPECT_LT((trace.final->P.dense() - direct.point->P.dense()).norm(), 1e-6);
    EXPECT_LT(trace.final->residual, 1e-10);
  }
}

// The dampened dynamics are exactly linear in the price increments:
// delta(t+1) = (I - eta L^{-1} K) delta(t) in free-pair coordinates.
TEST(RunNegotiation, IncrementDynamicsAreLinear) {
  stabnet::Rng rng(34);
  const NetworkSetting s = testutil::random_shared_setting(rng, 4);
  const auto qs = stabnet::detail::all_q_matrices(s);
  const auto pairs = stabnet::free_pairs(s);
  const auto op = stabnet::detail::build_rate_operator(qs, pairs, s.n);
  const double eta = 0.6;
  const MatrixXd iteration = MatrixXd::Identity(op.K.rows(), op.K.cols()) -
                             eta * op.L.cwiseInverse().asDiagonal() * op.K;

  const stabnet::NegotiationTrace trace =
      stabnet::run_negotiation(s, PriceMatrix(s.n), eta, 1e-13, 60);
  ASSERT_GE(trace.prices.size(), 4u);
  for (std::size_t t = 0; t + 2 < trace.prices.size(); ++t) {
    const VectorXd d0 = coords(s, trace.prices[t + 1]) - coords(s, trace.prices[t]);
    const VectorXd d1 = coords(s, trace.prices[t + 2]) - coords(s, trace.prices[t + 1]);
    if (d0.norm() < 1e-12) break;
    EXPECT_LT((d1 - iteration * d0).norm(), 1e-10 * std::max(1.0, d0.norm()));
  }
}

TEST(SampledEta, ConsistencyAndDeterminism) {
  MatrixXd sigma(4, 4);
  sigma << 1.0, 0.3, 0.3, 0.3, 0.3, 1.0, 0.3, 0.3, 0.3, 0.3, 1.0, 0.3, 0.3, 0.3, 0.3, 1.0;
  const stabnet::SampledEtaSummary a = stabnet::sampled_eta_experiment(sigma, 2000, 16, 77);
  EXPECT_FALSE(a.regularized);
  EXPECT_GT(a.min, 0.75);
  EXPECT_LT(a.max, 1.3);
  EXPECT_NEAR(a.mean, 1.0, 0.15);
  EXPECT_LE(a.q05, a.q25);
  EXPECT_LE(a.q25, a.median);
  EXPECT_LE(a.median, a.q75);

  // eta_star_true agrees with the full certificate under Gamma = I.
  NetworkSetting s;
  s.n = 4;
  s.M = MatrixXd::Identity(4, 4);
  s.gamma = VectorXd::Ones(4);
  s.sigmas = {sigma};
  s.allowed = stabnet::full_allowed(4);
  EXPECT_NEAR(a.eta_star_true, stabnet::rate_certificate(s).eta_star, 1e-10);

  const stabnet::SampledEtaSummary b = stabnet::sampled_eta_experiment(sigma, 2000, 16, 77);
  ASSERT_EQ(a.ratios.size(), b.ratios.size());
  for (std::size_t i = 0; i < a.ratios.size(); ++i) EXPECT_EQ(a.ratios[i], b.ratios[i]);
  const stabnet::SampledEtaSummary c = stabnet::sampled_eta_experiment(sigma, 2000, 16, 77, 4);
  for (std::size_t i = 0; i < a.ratios.size(); ++i) EXPECT_EQ(a.ratios[i], c.ratios[i]);
}

TEST(SampledEta, LargeSampleWithinTwoPercent) {
  MatrixXd sigma(5, 5);
  sigma.setIdentity();
  sigma.array() += 0.2;
  sigma.diagonal().setConstant(1.2);
  const stabnet::SampledEtaSummary summary = stabnet::sampled_eta_experiment(sigma, 100000, 4, 5);
  EXPECT_GT(summary.min, 0.98);
  EXPECT_LT(summary.max, 1.02);
}

TEST(SampledEta, SmallSampleRegularizationPath) {
  MatrixXd sigma(5, 5);
  sigma.setIdentity();
  const stabnet::SampledEtaSummary summary = stabnet::sampled_eta_experiment(sigma, 3, 4, 6);
  EXPECT_TRUE(summary.regularized);
  for (double r : summary.ratios) EXPECT_TRUE(std::isfinite(r));
  EXPECT_THROW(stabnet::sampled_eta_experiment(sigma, 0, 4, 6), stabnet::InputError);
  MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(stabnet::sampled_eta_experiment(indef, 10, 2, 6), stabnet::InputError);
}

}  // namespace
