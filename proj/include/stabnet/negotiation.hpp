// Pairwise negotiation dynamics: the bilateral price update, dampened
// simultaneous rounds, the contraction-rate certificate (eta*, extreme
// eigenvalues of the restricted L^dagger K operator), and the sampled
// covariance eta* experiment.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stabnet/core.hpp"
#include "stabnet/errors.hpp"
#include "stabnet/linalg.hpp"
#include "stabnet/parallel.hpp"
#include "stabnet/rng.hpp"

namespace stabnet {

struct NegotiationTrace {
  std::vector<PriceMatrix> prices;  // P(0), P(1), ..., P(T)
  std::vector<double> residuals;    // ||P(t+1) - P(t)||_F per round
  double eta = 0.0;
  bool converged = false;
  std::optional<StablePoint> final;  // present when converged
};

struct RateCertificate {
  double eta_star = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;

  // Contraction factor of the dampened iteration at dampening eta.
  double alpha(double eta) const {
    return std::max(std::abs(1.0 - eta * lambda_min), std::abs(1.0 - eta * lambda_max));
  }
};

namespace detail {

inline std::vector<MatrixXd> all_q_matrices(const NetworkSetting& s) {
  std::vector<MatrixXd> qs;
  qs.reserve(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) qs.push_back(q_matrix(s, i));
  return qs;
}

// One simultaneous dampened round computed from cached Q matrices.
inline PriceMatrix negotiation_step_q(const MatrixXd& m, const std::vector<MatrixXd>& qs,
                                      const std::vector<std::pair<int, int>>& pairs,
                                      const PriceMatrix& p, double eta) {
  const int n = static_cast<int>(m.rows());
  const MatrixXd r = m - p.dense();
  std::vector<MatrixXd> qr;
  qr.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) qr.push_back(qs[static_cast<std::size_t>(i)] * r);
  PriceMatrix out(n);
  for (const auto& [i, j] : pairs) {
    const double num = qr[static_cast<std::size_t>(j)](i, j) - qr[static_cast<std::size_t>(i)](j, i);
    const double den = qs[static_cast<std::size_t>(i)](j, j) + qs[static_cast<std::size_t>(j)](i, i);
    const double target = p(i, j) + num / den;
    out.set(i, j, (1.0 - eta) * p(i, j) + eta * target);
  }
  return out;
}

struct RateOperator {
  std::vector<std::pair<int, int>> pairs;
  MatrixXd K;   // restricted pair-negotiation operator
  VectorXd L;   // diagonal weights Q_i[j,j] + Q_j[i,i]
};

// Builds the restricted operator in closed form:
// K[(i,j),(k,l)] = d_ik Q_i[l,j] - d_il Q_i[k,j] + d_jl Q_j[i,k] - d_jk Q_j[i,l],
// which is nonzero only for column pairs sharing an index with the row pair.
inline RateOperator build_rate_operator(const std::vector<MatrixXd>& qs,
                                        const std::vector<std::pair<int, int>>& pairs, int n) {
  RateOperator op;
  op.pairs = pairs;
  const int f = static_cast<int>(pairs.size());
  op.K = MatrixXd::Zero(f, f);
  op.L.resize(f);
  MatrixXd col_of = MatrixXd::Constant(n, n, -1.0);
  for (int c = 0; c < f; ++c) {
    col_of(pairs[static_cast<std::size_t>(c)].first, pairs[static_cast<std::size_t>(c)].second) = c;
  }
  for (int r = 0; r < f; ++r) {
    const auto [i, j] = pairs[static_cast<std::size_t>(r)];
    const MatrixXd& qi = qs[static_cast<std::size_t>(i)];
    const MatrixXd& qj = qs[static_cast<std::size_t>(j)];
    op.L(r) = qi(j, j) + qj(i, i);
    op.K(r, r) += qi(j, j) + qj(i, i);
    for (int x = 0; x < n; ++x) {
      if (x != i && x != j) {
        const int ci = static_cast<int>(col_of(std::min(i, x), std::max(i, x)));
        if (ci >= 0) op.K(r, ci) += (i < x ? 1.0 : -1.0) * qi(x, j);
        const int cj = static_cast<int>(col_of(std::min(j, x), std::max(j, x)));
        if (cj >= 0) op.K(r, cj) += (j < x ? -1.0 : 1.0) * qj(i, x);
      }
    }
  }
  return op;
}

// Extreme eigenvalues of the symmetrized L^{-1/2} K L^{-1/2} restriction.
// Dense eigensolve for moderate systems; power iteration beyond.
inline linalg::EigenRange rate_spectrum(const RateOperator& op, bool force_power = false) {
  const int f = static_cast<int>(op.L.size());
  if (f == 0) return linalg::EigenRange{0.0, 0.0};
  const VectorXd inv_sqrt = op.L.array().rsqrt();
  const MatrixXd sym = linalg::symmetric_part(
      MatrixXd(inv_sqrt.asDiagonal() * op.K * inv_sqrt.asDiagonal()));
  if (!force_power && f <= 600) return linalg::eigen_range_dense(sym);
  return linalg::eigen_range_power(sym);
}

}  // namespace detail

// Bilateral renegotiated price for permitted pair {i, j} at the current P:
// the unique price at which both parties maximize utility at a common
// contract size, P'_ij = P_ij + [(Q_j(M-P))_ij - (Q_i(M-P))_ji] /
// (Q_i[j,j] + Q_j[i,i]).
inline double negotiate_pair_price(const NetworkSetting& s, const PriceMatrix& p, int i, int j) {
  if (i == j || i < 0 || j < 0 || i >= s.n || j >= s.n || !s.edge_allowed(i, j)) {
    throw InputError("negotiate_pair_price: pair is prohibited");
  }
  const MatrixXd r = s.M - p.dense();
  const MatrixXd qi = q_matrix(s, i);
  const MatrixXd qj = q_matrix(s, j);
  const double num = (qj * r)(i, j) - (qi * r)(j, i);
  const double den = qi(j, j) + qj(i, i);
  return p(i, j) + num / den;
}

// Simultaneous dampened round: every permitted pair renegotiates at the
// current P, then P(t+1) = (1 - eta) P(t) + eta P'. Skew-symmetry and
// masking are structural.
inline PriceMatrix negotiation_step(const NetworkSetting& s, const PriceMatrix& p, double eta) {
  validate(s);
  return detail::negotiation_step_q(s.M, detail::all_q_matrices(s), free_pairs(s), p, eta);
}

// Iterates rounds until ||P(t+1) - P(t)||_F <= tol or max_rounds; reaching
// max_rounds is reported through converged = false, not an exception.
inline NegotiationTrace run_negotiation(const NetworkSetting& s, const PriceMatrix& p0, double eta,
                                        double tol = 1e-10, int max_rounds = 10000) {
  validate(s);
  if (p0.size() != s.n) throw InputError("run_negotiation: P0 dimension mismatch");
  const auto qs = detail::all_q_matrices(s);
  const auto pairs = free_pairs(s);
  NegotiationTrace trace;
  trace.eta = eta;
  trace.prices.push_back(p0);
  PriceMatrix p = p0;
  for (int round = 0; round < max_rounds; ++round) {
    PriceMatrix next = detail::negotiation_step_q(s.M, qs, pairs, p, eta);
    const double residual = (next.dense() - p.dense()).norm();
    trace.prices.push_back(next);
    trace.residuals.push_back(residual);
    p = next;
    if (residual <= tol) {
      trace.converged = true;
      break;
    }
  }
  if (trace.converged) {
    const MatrixXd pd = p.dense();
    MatrixXd b(s.n, s.n);
    for (int j = 0; j < s.n; ++j) b.col(j) = qs[static_cast<std::size_t>(j)] * (s.M - pd).col(j);
    StablePoint point;
    point.W = Network::from_dense(b);
    point.P = p;
    point.residual = 0.5 * (b - b.transpose()).cwiseAbs().maxCoeff();
    trace.final = point;
  }
  return trace;
}

// Dampening threshold eta* = 2 / lambda_max and extreme eigenvalues of the
// restricted, symmetrized negotiation operator.
inline RateCertificate rate_certificate(const NetworkSetting& s) {
  validate(s);
  const auto op = detail::build_rate_operator(detail::all_q_matrices(s), free_pairs(s), s.n);
  const auto range = detail::rate_spectrum(op);
  RateCertificate cert;
  cert.lambda_min = range.min;
  cert.lambda_max = range.max;
  cert.eta_star = range.max > 0.0 ? 2.0 / range.max : std::numeric_limits<double>::infinity();
  return cert;
}

struct SampledEtaSummary {
  std::vector<double> ratios;  // per trial, estimated eta* / true eta*
  double min = 0.0;
  double mean = 0.0;
  double q05 = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
  bool regularized = false;  // true when m < n forced diagonal regularization
  double eta_star_true = 0.0;
};

// Sample-size experiment: every agent estimates the shared covariance from m
// unit-Gaussian draws (uncentered sample covariance), and the resulting
// per-agent Q matrices give an estimated eta*. When m < n each singular
// estimate is regularized by adding 1e-8 tr(Sigma_hat)/n to the diagonal.
inline SampledEtaSummary sampled_eta_experiment(const MatrixXd& sigma, int m, int trials,
                                                std::uint64_t seed, int workers = 1) {
  const int n = static_cast<int>(sigma.rows());
  if (sigma.cols() != n) throw InputError("sampled_eta_experiment: Sigma must be square");
  if (m < 1) throw InputError("sampled_eta_experiment: m must be positive");
  if (trials < 1) throw InputError("sampled_eta_experiment: trials must be positive");
  if (!linalg::is_positive_definite(sigma)) {
    throw InputError("sampled_eta_experiment: Sigma must be positive definite");
  }
  Eigen::LLT<MatrixXd> llt(linalg::symmetric_part(sigma));
  if (llt.info() != Eigen::Success) {
    throw InputError("sampled_eta_experiment: Cholesky factorization failed");
  }
  const MatrixXd chol_l = llt.matrixL();

  // True threshold: Gamma = I, all edges permitted.
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  const auto invert_pd = [n](const MatrixXd& mat) {
    const linalg::SymEig eig = linalg::sym_eig(mat);
    if (!(eig.values(0) > 0.0)) {
      throw NumericalError("sampled_eta_experiment: covariance estimate not invertible");
    }
    return MatrixXd(eig.vectors * eig.values.cwiseInverse().asDiagonal() *
                    eig.vectors.transpose());
  };
  const MatrixXd q_true = invert_pd(sigma + sigma.transpose());  // (2 Sigma)^{-1}
  const std::vector<MatrixXd> qs_true(static_cast<std::size_t>(n), q_true);
  const auto op_true = detail::build_rate_operator(qs_true, pairs, n);
  const double eta_true = 2.0 / detail::rate_spectrum(op_true).max;

  SampledEtaSummary summary;
  summary.eta_star_true = eta_true;
  summary.regularized = m < n;
  summary.ratios.assign(static_cast<std::size_t>(trials), 0.0);
  parallel_for_trials(workers, trials, [&](int t) {
    Rng rng(seed, static_cast<std::uint64_t>(t) + 1);
    std::vector<MatrixXd> qs;
    qs.reserve(static_cast<std::size_t>(n));
    for (int agent = 0; agent < n; ++agent) {
      const MatrixXd draws = chol_l * normal_matrix(rng, n, m);
      MatrixXd est = sample_covariance(draws);
      if (m < n) {
        est.diagonal().array() += 1e-8 * est.trace() / static_cast<double>(n);
      }
      qs.push_back(0.5 * invert_pd(est));
    }
    const auto op = detail::build_rate_operator(qs, pairs, n);
    const double eta_hat = 2.0 / detail::rate_spectrum(op).max;
    summary.ratios[static_cast<std::size_t>(t)] = eta_hat / eta_true;
  });

  std::vector<double> sorted = summary.ratios;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&sorted](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  summary.min = sorted.front();
  summary.max = sorted.back();
  summary.q05 = quantile(0.05);
  summary.q25 = quantile(0.25);
  summary.median = quantile(0.5);
  summary.q75 = quantile(0.75);
  double total = 0.0;
  for (double rvalue : sorted) total += rvalue;
  summary.mean = total / static_cast<double>(sorted.size());
  return summary;
}

}  // namespace stabnet
