// Community-structured belief generation, outlier-counterparty detection,
// exchangeability checking, and the constructive risk-aversion /
// expected-return non-identifiability map.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stabnet/core.hpp"
#include "stabnet/errors.hpp"
#include "stabnet/linalg.hpp"
#include "stabnet/parallel.hpp"
#include "stabnet/rng.hpp"
#include "stabnet/stability.hpp"

namespace stabnet {

// How the mean-table noise is indexed. SharedRows draws one value per
// (source community, target agent) and reuses it across all rows whose agents
// share that community; PerEntry draws independently for every (i, j);
// None disables mean noise entirely.
enum class MeanNoiseMode { SharedRows, PerEntry, None };

struct CommunityModel {
  int k = 1;                  // community count
  std::vector<int> theta;     // length-n memberships in [0, k)
  MatrixXd f;                 // k x k mean table
  MatrixXd g;                 // k x k covariance table (must be PD)
  VectorXd h;                 // length-k risk-aversion levels
  double sigma_noise = 0.0;   // scale for both gamma noise and mean noise
  double trunc_lower = -0.5;  // truncation bounds for the gamma noise
  double trunc_upper = 0.5;
  MeanNoiseMode mean_noise = MeanNoiseMode::SharedRows;

  int n() const { return static_cast<int>(theta.size()); }
};

inline void validate_model(const CommunityModel& model) {
  if (model.k < 1) throw InputError("community model: k must be positive");
  if (model.theta.empty()) throw InputError("community model: no agents");
  for (int c : model.theta) {
    if (c < 0 || c >= model.k) throw InputError("community model: membership out of range");
  }
  if (model.f.rows() != model.k || model.f.cols() != model.k) {
    throw InputError("community model: f must be k x k");
  }
  if (model.g.rows() != model.k || model.g.cols() != model.k) {
    throw InputError("community model: g must be k x k");
  }
  if ((model.g - model.g.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, model.g.cwiseAbs().maxCoeff())) {
    throw InputError("community model: g must be symmetric");
  }
  if (model.h.size() != model.k) throw InputError("community model: h must have length k");
  if (!model.f.allFinite() || !model.g.allFinite() || !model.h.allFinite()) {
    throw InputError("community model: tables must be finite");
  }
  if (model.sigma_noise < 0.0 || !std::isfinite(model.sigma_noise)) {
    throw InputError("community model: sigma_noise must be nonnegative");
  }
  if (model.sigma_noise > 0.0 && !(model.trunc_lower < model.trunc_upper)) {
    throw InputError("community model: truncation bounds must satisfy lower < upper");
  }
  for (int c = 0; c < model.k; ++c) {
    if (!(model.h(c) + model.trunc_lower > 0.0)) {
      throw InputError("community model: h[" + std::to_string(c) +
                       "] + lower truncation bound must stay positive");
    }
  }
}

// Draws a NetworkSetting from the community model:
//   M_ij    = f(theta_i, theta_j) + mean noise (per mean_noise mode),
//   Sigma_ij = g(theta_i, theta_j),
//   gamma_i = h(theta_i) + truncated-normal noise.
// Draw order is fixed (gamma noise by agent, then mean noise row-major) so a
// seeded rng reproduces the setting exactly. The induced covariance has rank
// at most k; callers must use the minimum-norm shared-covariance route when
// communities have more than one member. The covariance table itself must be
// PD; violations raise an error reporting its eigenvalues.
inline NetworkSetting generate_community_setting(const CommunityModel& model, Rng& rng) {
  validate_model(model);
  const linalg::SymEig geig = linalg::sym_eig(model.g);
  if (!(geig.values(0) > 1e-12 * std::max(geig.values(model.k - 1), 0.0))) {
    std::string eigs;
    for (int c = 0; c < model.k; ++c) {
      if (c) eigs += ", ";
      eigs += std::to_string(geig.values(c));
    }
    throw InputError("generate_community_setting: covariance table is not positive definite"
                     " (eigenvalues: " + eigs + ")");
  }
  const int n = model.n();
  NetworkSetting s;
  s.n = n;
  s.gamma.resize(n);
  for (int i = 0; i < n; ++i) {
    double eps = 0.0;
    if (model.sigma_noise > 0.0) {
      eps = rng.truncated_normal(model.sigma_noise, model.trunc_lower, model.trunc_upper);
    }
    s.gamma(i) = model.h(model.theta[static_cast<std::size_t>(i)]) + eps;
  }
  MatrixXd noise = MatrixXd::Zero(n, n);
  if (model.sigma_noise > 0.0 && model.mean_noise != MeanNoiseMode::None) {
    if (model.mean_noise == MeanNoiseMode::SharedRows) {
      MatrixXd table(model.k, n);
      for (int c = 0; c < model.k; ++c)
        for (int j = 0; j < n; ++j) table(c, j) = model.sigma_noise * rng.normal();
      for (int i = 0; i < n; ++i) {
        noise.row(i) = table.row(model.theta[static_cast<std::size_t>(i)]);
      }
    } else {
      noise = model.sigma_noise * normal_matrix(rng, n, n);
    }
  }
  s.M.resize(n, n);
  MatrixXd sigma(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int ci = model.theta[static_cast<std::size_t>(i)];
      const int cj = model.theta[static_cast<std::size_t>(j)];
      s.M(i, j) = model.f(ci, cj) + noise(i, j);
      sigma(i, j) = model.g(ci, cj);
    }
  }
  s.sigmas = {linalg::symmetric_part(sigma)};
  s.allowed = full_allowed(n);
  validate(s, /*require_pd=*/false);
  return s;
}

// Stable network of a (possibly rank-deficient) shared-covariance setting via
// the weighted minimum-norm eigendecomposition route.
inline Network community_stable_network(const NetworkSetting& s, double drop_tol = 1e-10) {
  if (!s.shared_sigma()) throw InputError("community_stable_network requires a shared Sigma");
  const MatrixXd h = 0.5 * (s.M + s.M.transpose());
  return Network::from_dense(linalg::lyapunov_weighted_solve(s.sigmas[0], s.gamma, h, drop_tol));
}

// argmax over candidates of |W_{observer, j}|, smallest index on ties.
inline int detect_outlier(const Network& w, int observer, const std::vector<int>& candidates) {
  if (candidates.empty()) throw InputError("detect_outlier: candidate list is empty");
  const int n = w.size();
  if (observer < 0 || observer >= n) throw InputError("detect_outlier: observer out of range");
  int best = -1;
  double best_val = -1.0;
  for (int j : candidates) {
    if (j < 0 || j >= n) throw InputError("detect_outlier: candidate index out of range");
    if (j == observer) throw InputError("detect_outlier: observer cannot be a candidate");
    const double v = std::abs(w(observer, j));
    if (v > best_val || (v == best_val && j < best)) {
      best_val = v;
      best = j;
    }
  }
  return best;
}

struct OutlierRatePoint {
  double sigma = 0.0;
  double deviation_sds = 0.0;  // outlier offset measured in truncated-normal SDs
  double rate = 0.0;
  double ci_halfwidth = 0.0;
  int n = 0;
};

// Two-community outlier-detection study. Per trial: covariance table drawn as
// a normalized Wishart, memberships resampled until agent 0 has a peer and an
// outsider exists, gamma noise truncated to [-1/2, 1/2] around level 1, the
// planted outlier's offset forced to -1/2, and a random outside observer
// scores detect_outlier against the planted agent 0. Deterministic in
// (seed, trial) and independent of the worker count.
inline std::vector<OutlierRatePoint> outlier_experiment(
    int n, int k, const std::vector<double>& sigmas, int trials, std::uint64_t seed,
    MeanNoiseMode noise_mode = MeanNoiseMode::SharedRows, int workers = 1) {
  if (n < 3) throw InputError("outlier_experiment: n must be at least 3");
  if (k < 2) throw InputError("outlier_experiment: k must be at least 2");
  if (trials < 1) throw InputError("outlier_experiment: trials must be positive");
  if (sigmas.empty()) throw InputError("outlier_experiment: sigma list is empty");
  for (double sg : sigmas) {
    if (!(sg > 0.0) || !std::isfinite(sg)) {
      throw InputError("outlier_experiment: sigma values must be positive");
    }
  }
  const int dof = std::max(5, k);
  std::vector<OutlierRatePoint> out;
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    const double sg = sigmas[si];
    std::vector<int> hits(static_cast<std::size_t>(trials), 0);
    parallel_for_trials(workers, trials, [&](int t) {
      Rng rng(seed, static_cast<std::uint64_t>(si) * static_cast<std::uint64_t>(trials) +
                        static_cast<std::uint64_t>(t) + 1);
      CommunityModel model;
      model.k = k;
      model.sigma_noise = sg;
      model.mean_noise = noise_mode;
      model.h = VectorXd::Ones(k);
      model.f = MatrixXd::Ones(k, k) - MatrixXd::Identity(k, k);
      for (int attempt = 0;; ++attempt) {
        const MatrixXd a = normal_matrix(rng, k, dof);
        model.g = a * a.transpose() / static_cast<double>(dof);
        if (linalg::is_positive_definite(model.g)) break;
        if (attempt > 1000) throw NumericalError("outlier_experiment: covariance table draw failed");
      }
      model.theta.assign(static_cast<std::size_t>(n), 0);
      for (int attempt = 0;; ++attempt) {
        int peers = 0, outsiders = 0;
        for (int i = 0; i < n; ++i) {
          model.theta[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(k));
        }
        for (int i = 1; i < n; ++i) {
          if (model.theta[static_cast<std::size_t>(i)] == model.theta[0]) ++peers;
          else ++outsiders;
        }
        if (peers >= 1 && outsiders >= 1) break;
        if (attempt > 100000) throw NumericalError("outlier_experiment: membership draw failed");
      }
      NetworkSetting s = generate_community_setting(model, rng);
      s.gamma(0) = model.h(model.theta[0]) - 0.5;  // planted risk-seeking outlier
      std::vector<int> candidates, outsiders;
      for (int i = 0; i < n; ++i) {
        if (model.theta[static_cast<std::size_t>(i)] == model.theta[0]) candidates.push_back(i);
        else outsiders.push_back(i);
      }
      const int observer =
          outsiders[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(outsiders.size())))];
      const Network w = community_stable_network(s);
      hits[static_cast<std::size_t>(t)] = detect_outlier(w, observer, candidates) == 0 ? 1 : 0;
    });
    int total = 0;
    for (int hgot : hits) total += hgot;
    OutlierRatePoint point;
    point.sigma = sg;
    point.deviation_sds = 0.5 / truncated_normal_sd(sg, -0.5, 0.5);
    point.rate = static_cast<double>(total) / static_cast<double>(trials);
    point.ci_halfwidth =
        1.96 * std::sqrt(point.rate * (1.0 - point.rate) / static_cast<double>(trials));
    point.n = n;
    out.push_back(point);
  }
  return out;
}

struct PermutationReport {
  double max_abs_z = 0.0;  // largest standardized paired discrepancy
  int statistics = 0;      // number of non-degenerate statistics compared
  int draws = 0;
};

// Monte Carlo exchangeability check: network entries W_ij versus the
// permuted entries W_{pi(i), pi(j)} over repeated model draws, compared as
// paired z statistics on first and second moments. Positions whose paired
// differences vanish identically (fixed points of pi) are skipped. The
// permutation must preserve communities.
inline PermutationReport permutation_check(const CommunityModel& model, const std::vector<int>& pi,
                                           int trials, std::uint64_t seed) {
  validate_model(model);
  const int n = model.n();
  if (static_cast<int>(pi.size()) != n) throw InputError("permutation_check: pi must have length n");
  if (trials < 2) throw InputError("permutation_check: trials must be at least 2");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int target = pi[static_cast<std::size_t>(i)];
    if (target < 0 || target >= n || seen[static_cast<std::size_t>(target)]) {
      throw InputError("permutation_check: pi is not a permutation");
    }
    seen[static_cast<std::size_t>(target)] = 1;
    if (model.theta[static_cast<std::size_t>(target)] != model.theta[static_cast<std::size_t>(i)]) {
      throw InputError("permutation_check: pi must preserve community memberships (agent " +
                       std::to_string(i) + ")");
    }
  }

  std::vector<std::pair<int, int>> positions;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) positions.emplace_back(i, j);
  const std::size_t p = positions.size();
  // Paired statistics: entry means, entry squares, adjacent-entry products.
  const std::size_t total_stats = 3 * p - 1;
  std::vector<double> sum(total_stats, 0.0), sumsq(total_stats, 0.0);
  std::vector<char> nonzero(total_stats, 0);

  for (int d = 0; d < trials; ++d) {
    Rng rng(seed, static_cast<std::uint64_t>(d) + 1);
    const NetworkSetting s = generate_community_setting(model, rng);
    const Network w = community_stable_network(s);
    std::vector<double> x(p), y(p);
    for (std::size_t q = 0; q < p; ++q) {
      const auto [i, j] = positions[q];
      x[q] = w(i, j);
      y[q] = w(pi[static_cast<std::size_t>(i)], pi[static_cast<std::size_t>(j)]);
    }
    const auto record = [&](std::size_t idx, double diff) {
      sum[idx] += diff;
      sumsq[idx] += diff * diff;
      if (diff != 0.0) nonzero[idx] = 1;
    };
    for (std::size_t q = 0; q < p; ++q) record(q, x[q] - y[q]);
    for (std::size_t q = 0; q < p; ++q) record(p + q, x[q] * x[q] - y[q] * y[q]);
    for (std::size_t q = 0; q + 1 < p; ++q) {
      record(2 * p + q, x[q] * x[q + 1] - y[q] * y[q + 1]);
    }
  }

  PermutationReport report;
  report.draws = trials;
  const double big_n = static_cast<double>(trials);
  for (std::size_t idx = 0; idx < total_stats; ++idx) {
    if (!nonzero[idx]) continue;
    const double mean = sum[idx] / big_n;
    const double var = std::max((sumsq[idx] - big_n * mean * mean) / (big_n - 1.0), 0.0);
    const double z = var > 0.0 ? mean / std::sqrt(var / big_n)
                               : std::numeric_limits<double>::infinity();
    report.max_abs_z = std::max(report.max_abs_z, std::abs(z));
    ++report.statistics;
  }
  return report;
}

// Constructive non-identifiability: given new risk aversions gamma', returns
// a setting with the ORIGINAL gamma whose stable network equals the stable
// network W' of (M, Sigma, gamma'). The mean shift is
// M' = M - 2 Sigma W' Delta with Delta = diag(gamma' - gamma); columns of
// agents whose risk aversion is unchanged are untouched.
inline NetworkSetting equivalent_means(const NetworkSetting& s, const VectorXd& gamma_prime) {
  validate(s);
  if (!s.shared_sigma()) throw InputError("equivalent_means requires a shared Sigma");
  if (gamma_prime.size() != s.n) throw InputError("equivalent_means: gamma' must have length n");
  for (int i = 0; i < s.n; ++i) {
    if (!(gamma_prime(i) > 0.0) || !std::isfinite(gamma_prime(i))) {
      throw InputError("equivalent_means: gamma' must be positive");
    }
  }
  NetworkSetting primed = s;
  primed.gamma = gamma_prime;
  const Network w_prime = solve_stable_shared(primed);
  const VectorXd delta = gamma_prime - s.gamma;
  NetworkSetting dagger = s;
  dagger.M = s.M - 2.0 * s.sigmas[0] * w_prime.dense() * delta.asDiagonal();
  return dagger;
}

}  // namespace stabnet
