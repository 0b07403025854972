// Regulatory analyses: friction / no-equilibrium detection, risk-perturbation
// laws, the dW/dM sensitivity tensor with its small-eigenvalue approximation,
// and the source-detection Monte Carlo experiment.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stabnet/core.hpp"
#include "stabnet/errors.hpp"
#include "stabnet/linalg.hpp"
#include "stabnet/parallel.hpp"
#include "stabnet/rng.hpp"
#include "stabnet/stability.hpp"

namespace stabnet {

enum class FrictionStatus { Stable, NoEquilibrium };

struct FrictionOutcome {
  FrictionStatus status = FrictionStatus::Stable;
  std::optional<Network> W;  // present when Stable
  int witness_i = -1;        // first offending pair, lexicographic
  int witness_j = -1;
  double witness_h = 0.0;
};

// Entrywise fixed point W + lambda * sign(W) = H with H = (M + M^T)/2 under
// Sigma = I, Gamma = I. Entries with H_kl = 0 stay zero; 0 < |H_kl| <= lambda
// admits no solution (the boundary |H| = lambda is treated conservatively as
// NoEquilibrium). lambda = 0 returns W = H verbatim.
inline FrictionOutcome friction_stable_point(const MatrixXd& m, double lambda) {
  if (m.rows() != m.cols() || m.rows() < 1) throw InputError("friction: M must be square");
  if (!m.allFinite()) throw InputError("friction: M has non-finite entries");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InputError("friction: lambda must be a nonnegative real");
  }
  const int n = static_cast<int>(m.rows());
  const MatrixXd h = 0.5 * (m + m.transpose());
  FrictionOutcome out;
  Network w(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double hij = h(i, j);
      if (hij == 0.0) {
        w.set(i, j, 0.0);
      } else if (std::abs(hij) > lambda) {
        w.set(i, j, hij - lambda * (hij > 0.0 ? 1.0 : -1.0));
      } else {
        out.status = FrictionStatus::NoEquilibrium;
        out.witness_i = i;
        out.witness_j = j;
        out.witness_h = hij;
        return out;
      }
    }
  }
  out.W = std::move(w);
  return out;
}

struct PerturbResult {
  Network W;
  Network W_scaled;
  double max_rel_dev = 0.0;  // deviation of W_scaled from W / c
};

// Solves the setting under Sigma and under c * Sigma and checks the inverse
// scaling law W(c Sigma) = W / c to 1e-10 relative.
inline PerturbResult perturb_sigma_scalar(const NetworkSetting& s, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw InputError("perturb_sigma_scalar: c must be positive");
  const Network base = solve_stable_shared(s);
  NetworkSetting scaled = s;
  scaled.sigmas[0] = c * s.sigmas[0];
  const Network bumped = solve_stable_shared(scaled);
  PerturbResult out{base, bumped, 0.0};
  const MatrixXd expected = base.dense() / c;
  const MatrixXd got = bumped.dense();
  const double scale = std::max(expected.cwiseAbs().maxCoeff(), 1e-300);
  out.max_rel_dev = (got - expected).cwiseAbs().maxCoeff() / scale;
  if (out.max_rel_dev > 1e-10) {
    throw NumericalError("perturb_sigma_scalar: inverse scaling violated beyond 1e-10");
  }
  return out;
}

// tr(M^T (W' - W)) where W' is the stable network under sigma_prime. Requires
// a shared Sigma, uniform risk aversion, and sigma_prime strictly dominating
// Sigma (smallest eigenvalue of the difference positive).
inline double risk_trace_stat(const NetworkSetting& s, const MatrixXd& sigma_prime) {
  validate(s);
  if (!s.shared_sigma()) throw InputError("risk_trace_stat requires a shared Sigma");
  for (int i = 1; i < s.n; ++i) {
    if (s.gamma(i) != s.gamma(0)) {
      throw InputError("risk_trace_stat requires uniform risk aversion (Gamma = gamma I)");
    }
  }
  if (sigma_prime.rows() != s.n || sigma_prime.cols() != s.n) {
    throw InputError("risk_trace_stat: sigma_prime dimension mismatch");
  }
  const MatrixXd diff = linalg::symmetric_part(sigma_prime) - s.sigmas[0];
  if (!linalg::is_positive_definite(diff)) {
    throw InputError("risk_trace_stat: sigma_prime must strictly dominate Sigma");
  }
  const Network base = solve_stable_shared(s);
  NetworkSetting prime = s;
  prime.sigmas[0] = linalg::symmetric_part(sigma_prime);
  const Network bumped = solve_stable_shared(prime);
  const MatrixXd dw = bumped.dense() - base.dense();
  return (s.M.transpose() * dw).trace();
}

struct SensitivityTensor {
  int k = 0;
  int l = 0;
  MatrixXd grad;      // entry (i,j) = dW_ij / dM_kl
  MatrixXd V;         // eigenvectors of Sigma, columns by decreasing eigenvalue
  VectorXd lambdas;   // matching eigenvalues, decreasing
};

// Sensitivity of the stable network to one mean entry under Gamma = I:
// grad = V * sym(C) * V^T with C_st = V_ks V_lt / (lambda_s + lambda_t),
// the eigenbasis solution of Sigma dW + dW Sigma = (E_kl + E_lk)/2.
inline SensitivityTensor network_gradient(const MatrixXd& sigma, int k, int l) {
  const int n = static_cast<int>(sigma.rows());
  if (sigma.cols() != n || n < 1) throw InputError("network_gradient: Sigma must be square");
  if (k < 0 || k >= n || l < 0 || l >= n) throw InputError("network_gradient: target out of range");
  const MatrixXd sym = linalg::symmetric_part(sigma);
  if (!linalg::is_positive_definite(sym)) {
    throw InputError("network_gradient: Sigma must be positive definite");
  }
  const linalg::SymEig eig = linalg::sym_eig(sym);
  SensitivityTensor out;
  out.k = k;
  out.l = l;
  out.V = eig.vectors.rowwise().reverse();
  out.lambdas = eig.values.reverse();
  MatrixXd c(n, n);
  for (int sidx = 0; sidx < n; ++sidx) {
    for (int tidx = 0; tidx < n; ++tidx) {
      c(sidx, tidx) = out.V(k, sidx) * out.V(l, tidx) / (out.lambdas(sidx) + out.lambdas(tidx));
    }
  }
  out.grad = out.V * (0.5 * (c + c.transpose())) * out.V.transpose();
  return out;
}

// Rank-one approximation keyed to the smallest eigenpair: entry (i,j) is
// |V_in V_kn V_jn V_ln| / (2 lambda_n) with v_n = last column of V.
inline MatrixXd network_gradient_approx(const MatrixXd& v, double lambda_n, int k, int l) {
  const int n = static_cast<int>(v.rows());
  if (v.cols() != n || n < 1) throw InputError("network_gradient_approx: V must be square");
  if (k < 0 || k >= n || l < 0 || l >= n) {
    throw InputError("network_gradient_approx: target out of range");
  }
  if (!(lambda_n > 0.0)) throw InputError("network_gradient_approx: lambda_n must be positive");
  const VectorXd vn = v.col(n - 1);
  MatrixXd out(n, n);
  const double front = std::abs(vn(k) * vn(l)) / (2.0 * lambda_n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = front * std::abs(vn(i) * vn(j));
  return out;
}

// Argmax over permitted pairs (i <= j) of |W'_ij - W_ij|; lexicographic tie
// break. Identical networks carry no signal and are rejected.
inline std::pair<int, int> source_detect(const Network& w, const Network& wprime,
                                         const std::vector<std::vector<int>>& allowed) {
  const int n = w.size();
  if (wprime.size() != n) throw InputError("source_detect: network sizes differ");
  if (static_cast<int>(allowed.size()) != n) throw InputError("source_detect: mask size mismatch");
  int best_i = -1, best_j = -1;
  double best = -1.0;
  bool any_change = false;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      if (!std::binary_search(allowed[static_cast<std::size_t>(i)].begin(),
                              allowed[static_cast<std::size_t>(i)].end(), j)) {
        continue;
      }
      const double d = std::abs(wprime(i, j) - w(i, j));
      if (d != 0.0) any_change = true;
      if (d > best) {
        best = d;
        best_i = i;
        best_j = j;
      }
    }
  }
  if (best_i < 0) throw InputError("source_detect: no permitted pairs");
  if (!any_change) throw InputError("source_detect: networks identical (no change to attribute)");
  return {best_i, best_j};
}

// Sigma = D^{1/2} (R + E) D^{1/2} with D_ii = i^{-alpha} (1-based), R the
// equicorrelation matrix, and E = ||R||_2 * Wishart(sqrt(eps) I, n)/n.
// Indefinite draws are rejected and resampled; the count is reported.
inline MatrixXd equicorr_sigma(int n, double rho, double alpha, double eps, Rng& rng,
                               int* rejections = nullptr) {
  if (n < 1) throw InputError("equicorr_sigma: n must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw InputError("equicorr_sigma: rho must lie in (0, 1)");
  if (alpha < 0.0 || eps < 0.0) throw InputError("equicorr_sigma: alpha and eps must be nonnegative");
  MatrixXd r = MatrixXd::Constant(n, n, rho);
  r.diagonal().setOnes();
  VectorXd dsqrt(n);
  for (int i = 0; i < n; ++i) dsqrt(i) = std::pow(static_cast<double>(i + 1), -alpha / 2.0);
  const double r_norm = linalg::sym_eig(r).values(n - 1);
  if (rejections) *rejections = 0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    MatrixXd noise = MatrixXd::Zero(n, n);
    if (eps > 0.0) {
      const MatrixXd scale = std::sqrt(eps) * MatrixXd::Identity(n, n);
      noise = r_norm * wishart(rng, scale, n) / static_cast<double>(n);
    }
    MatrixXd sigma = dsqrt.asDiagonal() * (r + noise) * dsqrt.asDiagonal();
    sigma = linalg::symmetric_part(sigma);
    if (linalg::is_positive_definite(sigma)) return sigma;
    if (rejections) ++(*rejections);
  }
  throw NumericalError("equicorr_sigma: could not draw a positive definite matrix");
}

struct SourceRateCell {
  double alpha = 0.0;
  double eps = 0.0;
  double rate = 0.0;
  double ci_halfwidth = 0.0;
  int trials = 0;
};

struct SourceGrid {
  std::vector<double> alphas;
  std::vector<double> epss;
};

// Per trial: sample Sigma, unit-Gaussian M, a uniform permitted target pair
// (diagonal included), bump M_kl by delta, re-solve, and score whether
// source_detect recovers the target. Half-widths are the normal-approximation
// binomial 1.96 sqrt(p(1-p)/trials). Results are deterministic in (seed) and
// independent of the worker count.
inline std::vector<SourceRateCell> source_detection_experiment(const SourceGrid& grid, int n,
                                                               double rho, double delta,
                                                               int trials, std::uint64_t seed,
                                                               int workers = 1) {
  if (n < 2) throw InputError("source_detection_experiment: n must be at least 2");
  if (trials < 1) throw InputError("source_detection_experiment: trials must be positive");
  if (!(delta != 0.0) || !std::isfinite(delta)) {
    throw InputError("source_detection_experiment: delta must be a nonzero real");
  }
  if (grid.alphas.empty() || grid.epss.empty()) {
    throw InputError("source_detection_experiment: empty grid");
  }
  const auto allowed = full_allowed(n);
  const int pairs = n * (n + 1) / 2;
  std::vector<SourceRateCell> out;
  int cell_index = 0;
  for (double alpha : grid.alphas) {
    for (double eps : grid.epss) {
      std::vector<int> hits(static_cast<std::size_t>(trials), 0);
      parallel_for_trials(workers, trials, [&](int t) {
        Rng rng(seed, static_cast<std::uint64_t>(cell_index) * static_cast<std::uint64_t>(trials) +
                          static_cast<std::uint64_t>(t) + 1);
        const MatrixXd sigma = equicorr_sigma(n, rho, alpha, eps, rng);
        NetworkSetting s;
        s.n = n;
        s.M = normal_matrix(rng, n, n);
        s.gamma = VectorXd::Ones(n);
        s.sigmas = {sigma};
        s.allowed = allowed;
        // Uniform draw over all unordered pairs i <= j, diagonal included.
        int flat = static_cast<int>(rng.below(static_cast<std::uint64_t>(pairs)));
        int k = 0;
        while (flat >= n - k) {
          flat -= n - k;
          ++k;
        }
        const int l = k + flat;
        const Network base = solve_stable_shared(s);
        NetworkSetting bumped = s;
        bumped.M(k, l) += delta;
        const Network prime = solve_stable_shared(bumped);
        const auto detected = source_detect(base, prime, allowed);
        hits[static_cast<std::size_t>(t)] = (detected.first == k && detected.second == l) ? 1 : 0;
      });
      int total = 0;
      for (int h : hits) total += h;
      SourceRateCell cell;
      cell.alpha = alpha;
      cell.eps = eps;
      cell.trials = trials;
      cell.rate = static_cast<double>(total) / static_cast<double>(trials);
      cell.ci_halfwidth =
          1.96 * std::sqrt(cell.rate * (1.0 - cell.rate) / static_cast<double>(trials));
      out.push_back(cell);
      ++cell_index;
    }
  }
  return out;
}

}  // namespace stabnet
