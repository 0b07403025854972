// Stable-point linear system: construction, solving with Unique / NonUnique /
// NoStablePoint classification, the shared-covariance closed form, domination
// checks, and the randomized higher-order deviation search.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include <json.hpp>

#include "stabnet/core.hpp"
#include "stabnet/errors.hpp"
#include "stabnet/linalg.hpp"
#include "stabnet/rng.hpp"

namespace stabnet {

struct StableSystem {
  std::vector<std::pair<int, int>> pairs;  // F, ordered (i < j), lexicographic
  MatrixXd Z;                              // |F| x |F|
  VectorXd rhs;                            // uvec(A - A^T) restricted to F
  VectorXd singular_values;                // descending
};

enum class SolveStatus { Unique, NonUnique, NoStablePoint };

struct SolveOutcome {
  SolveStatus status = SolveStatus::Unique;
  std::optional<StablePoint> point;  // present for Unique and NonUnique
  int null_dimension = 0;            // > 0 only for NonUnique
  double lstsq_residual = 0.0;       // ||Z p - rhs|| of the least-squares fit
  VectorXd singular_values;
};

namespace detail {

// Core system construction from precomputed Q matrices. Kept separate from
// the public entry point so synthetic (possibly rank-deficient) Q
// configurations can be exercised directly.
inline StableSystem build_system_from_q(const MatrixXd& m, const std::vector<MatrixXd>& qs,
                                        const std::vector<std::pair<int, int>>& pairs) {
  const int n = static_cast<int>(m.rows());
  const int f = static_cast<int>(pairs.size());
  MatrixXd a(n, n);
  for (int j = 0; j < n; ++j) a.col(j) = qs[static_cast<std::size_t>(j)] * m.col(j);

  StableSystem sys;
  sys.pairs = pairs;
  sys.Z = MatrixXd::Zero(f, f);
  sys.rhs.resize(f);
  for (int r = 0; r < f; ++r) {
    const auto [i, j] = pairs[static_cast<std::size_t>(r)];
    sys.rhs(r) = a(i, j) - a(j, i);
    // C = (B_ij - B_ji) - (B_ij - B_ji)^T with B_ij = e_i (Q_i row j) and
    // B_ji = e_j (Q_j row i); only rows/columns i and j of C are nonzero.
    for (int c = 0; c < f; ++c) {
      const auto [k, l] = pairs[static_cast<std::size_t>(c)];
      double value = 0.0;
      const MatrixXd& qi = qs[static_cast<std::size_t>(i)];
      const MatrixXd& qj = qs[static_cast<std::size_t>(j)];
      if (k == i) value += qi(j, l);
      if (k == j) value -= qj(i, l);
      if (l == i) value -= qi(j, k);
      if (l == j) value += qj(i, k);
      sys.Z(r, c) = value;
    }
  }
  Eigen::JacobiSVD<MatrixXd> svd(sys.Z);
  sys.singular_values = svd.singularValues();
  return sys;
}

struct Classification {
  SolveStatus status;
  VectorXd p;  // solution / minimum-norm least-squares solution
  int null_dimension;
  double lstsq_residual;
  VectorXd singular_values;
};

// Solves Z p = rhs with singular-value rank decision: Unique when the
// smallest singular value exceeds tol times the largest; otherwise the
// minimum-norm least-squares solution classifies the system as NonUnique
// (consistent) or NoStablePoint (residual above tol).
inline Classification classify_system(const MatrixXd& z, const VectorXd& rhs, double tol) {
  Classification out;
  const int f = static_cast<int>(z.rows());
  if (f == 0) {
    out.status = SolveStatus::Unique;
    out.p = VectorXd();
    out.null_dimension = 0;
    out.lstsq_residual = 0.0;
    out.singular_values = VectorXd();
    return out;
  }
  Eigen::JacobiSVD<MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  out.singular_values = sv;
  const double smax = sv(0);
  int rank = 0;
  for (int k = 0; k < sv.size(); ++k) {
    if (sv(k) > tol * smax) ++rank;
  }
  VectorXd inv_sv = VectorXd::Zero(sv.size());
  for (int k = 0; k < rank; ++k) inv_sv(k) = 1.0 / sv(k);
  out.p = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose() * rhs;
  out.lstsq_residual = (z * out.p - rhs).norm();
  out.null_dimension = f - rank;
  if (rank == f) {
    out.status = SolveStatus::Unique;
  } else if (out.lstsq_residual <= tol * std::max(1.0, rhs.norm())) {
    out.status = SolveStatus::NonUnique;
  } else {
    out.status = SolveStatus::NoStablePoint;
  }
  return out;
}

// Full solve pipeline from Q-space: classify the price system, reconstruct
// P from the free-pair solution and W from the stack of best responses
// B col j = Q_j (M - P) e_j, symmetrized; the recorded residual is the
// maximum best-response gap max |B - B^T| / 2.
inline SolveOutcome solve_with_qs(const MatrixXd& m, const std::vector<MatrixXd>& qs,
                                  const std::vector<std::pair<int, int>>& pairs, double tol) {
  const int n = static_cast<int>(m.rows());
  const StableSystem sys = build_system_from_q(m, qs, pairs);
  const Classification cls = classify_system(sys.Z, sys.rhs, tol);

  SolveOutcome out;
  out.status = cls.status;
  out.null_dimension = cls.null_dimension;
  out.lstsq_residual = cls.lstsq_residual;
  out.singular_values = cls.singular_values;
  if (cls.status == SolveStatus::NoStablePoint) return out;

  PriceMatrix p(n);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    p.set(pairs[r].first, pairs[r].second, cls.p(static_cast<int>(r)));
  }
  const MatrixXd pd = p.dense();
  MatrixXd b(n, n);
  for (int j = 0; j < n; ++j) b.col(j) = qs[static_cast<std::size_t>(j)] * (m - pd).col(j);
  StablePoint point;
  point.W = Network::from_dense(b);
  point.P = p;
  point.residual = 0.5 * (b - b.transpose()).cwiseAbs().maxCoeff();
  out.point = point;
  return out;
}

}  // namespace detail

// Builds the free-pair price system from a validated setting.
inline StableSystem build_system(const NetworkSetting& s) {
  validate(s);
  std::vector<MatrixXd> qs;
  qs.reserve(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) qs.push_back(q_matrix(s, i));
  return detail::build_system_from_q(s.M, qs, free_pairs(s));
}

// Solves for a stable point. Rank decisions use the singular-value ratio
// threshold tol (default 1e-9); NonUnique returns the minimum-norm price
// solution as a deterministic witness.
inline SolveOutcome solve_stable(const NetworkSetting& s, double tol = 1e-9) {
  validate(s);
  std::vector<MatrixXd> qs;
  qs.reserve(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) qs.push_back(q_matrix(s, i));
  return detail::solve_with_qs(s.M, qs, free_pairs(s), tol);
}

// Shared-covariance closed form (all edges permitted): solves
// Sigma W Gamma + Gamma W Sigma = (M + M^T)/2 both through the explicit
// Kronecker system and through the eigendecomposition double sum. The
// eigendecomposition result is returned; the relative Frobenius discrepancy
// between the two routes is written to *route_discrepancy when provided.
inline Network solve_stable_shared(const NetworkSetting& s, double* route_discrepancy = nullptr) {
  validate(s);
  if (!s.shared_sigma()) {
    throw InputError("solve_stable_shared requires a shared covariance");
  }
  for (int i = 0; i < s.n; ++i) {
    if (static_cast<int>(s.allowed[static_cast<std::size_t>(i)].size()) != s.n) {
      throw InputError("solve_stable_shared requires all edges (and self-loops) permitted");
    }
  }
  const MatrixXd h = 0.5 * (s.M + s.M.transpose());
  const MatrixXd w_eig = linalg::lyapunov_weighted_solve(s.sigmas[0], s.gamma, h);
  const MatrixXd w_kron = linalg::lyapunov_kron_solve(s.sigmas[0], s.gamma, h);
  const double scale = std::max(w_eig.norm(), 1e-300);
  const double disc = (w_eig - w_kron).norm() / scale;
  if (route_discrepancy != nullptr) *route_discrepancy = disc;
  return Network::from_dense(w_eig);
}

struct DominationReport {
  VectorXd utility_delta;  // per agent, utility(b) - utility(a)
  bool b_dominates_a = false;
};

// Compares two feasible points: b dominates a when every agent is at least
// as well off and someone is strictly better off (tolerance 1e-12).
inline DominationReport check_domination(const NetworkSetting& s,
                                         const StablePoint& a, const StablePoint& b) {
  constexpr double kTol = 1e-12;
  DominationReport report;
  report.utility_delta.resize(s.n);
  bool all_geq = true;
  bool any_strict = false;
  for (int i = 0; i < s.n; ++i) {
    const double delta = utility(s, i, b.W, b.P) - utility(s, i, a.W, a.P);
    report.utility_delta(i) = delta;
    all_geq = all_geq && delta >= -kTol;
    any_strict = any_strict || delta > kTol;
  }
  report.b_dominates_a = all_geq && any_strict;
  return report;
}

struct DeviationReport {
  double best_single_improvement = 0.0;  // max utility gain found for a deviator
  double best_cartel_improvement = 0.0;  // max over trials of min-over-cartel gain
  int trials = 0;
  bool certified = false;  // no strict improvement found at tolerance 1e-12
};

namespace detail {

// Applies one sampled single-agent action with counterparty responses:
// each j accepts a proposed (w_ij, p_ij) revision only if it strictly raises
// j's utility; on rejection the deviator keeps or cancels the contract,
// cancelling exactly when that strictly improves the deviator. Rejected
// pairs are processed in ascending j against the running candidate point.
inline double single_agent_action_gain(const NetworkSetting& s, const StablePoint& stable,
                                       int deviator, Rng& rng, double scale) {
  constexpr double kTol = 1e-12;
  const MatrixXd w0 = stable.W.dense();
  const MatrixXd p0 = stable.P.dense();
  MatrixXd w = w0;
  MatrixXd p = p0;
  const double base_i = utility(s, deviator, stable.W, stable.P);

  const auto& partners = s.allowed[static_cast<std::size_t>(deviator)];
  for (int j : partners) {
    if (rng.uniform() < 0.5) continue;  // leave this contract untouched
    const double dw = scale * rng.normal();
    const double dp = j == deviator ? 0.0 : scale * rng.normal();
    if (j == deviator) {
      // Self-contract: no counterparty, the proposal always lands.
      w(deviator, deviator) += dw;
      continue;
    }
    // Counterparty j evaluates the isolated pair revision.
    MatrixXd wj = w;
    MatrixXd pj = p;
    wj(deviator, j) += dw;
    wj(j, deviator) += dw;
    pj(deviator, j) += dp;
    pj(j, deviator) -= dp;
    const double u_cur = utility(s, j, Network::from_dense(w), PriceMatrix::from_dense(p));
    const double u_new = utility(s, j, Network::from_dense(wj), PriceMatrix::from_dense(pj));
    if (u_new > u_cur + kTol) {
      w = wj;
      p = pj;
      continue;
    }
    // Rejected: keep, or cancel if cancellation strictly helps the deviator.
    MatrixXd wc = w;
    MatrixXd pc = p;
    wc(deviator, j) = 0.0;
    wc(j, deviator) = 0.0;
    pc(deviator, j) = 0.0;
    pc(j, deviator) = 0.0;
    const double u_keep =
        utility(s, deviator, Network::from_dense(w), PriceMatrix::from_dense(p));
    const double u_cancel =
        utility(s, deviator, Network::from_dense(wc), PriceMatrix::from_dense(pc));
    if (u_cancel > u_keep + kTol) {
      w = wc;
      p = pc;
    }
  }
  return utility(s, deviator, Network::from_dense(w), PriceMatrix::from_dense(p)) - base_i;
}

// Applies one sampled cartel reallocation: every permitted pair inside the
// cartel (self-contracts included) may move; the gain is the minimum utility
// change over members, positive only if the whole cartel strictly profits.
inline double cartel_action_gain(const NetworkSetting& s, const StablePoint& stable,
                                 const std::vector<int>& cartel, Rng& rng, double scale) {
  MatrixXd w = stable.W.dense();
  MatrixXd p = stable.P.dense();
  for (std::size_t a = 0; a < cartel.size(); ++a) {
    for (std::size_t b = a; b < cartel.size(); ++b) {
      const int i = std::min(cartel[a], cartel[b]);
      const int j = std::max(cartel[a], cartel[b]);
      if (!s.edge_allowed(i, j)) continue;
      const double dw = scale * rng.normal();
      w(i, j) += dw;
      if (i != j) {
        w(j, i) += dw;
        const double dp = scale * rng.normal();
        p(i, j) += dp;
        p(j, i) -= dp;
      }
    }
  }
  const Network wn = Network::from_dense(w);
  const PriceMatrix pn = PriceMatrix::from_dense(p);
  double min_gain = std::numeric_limits<double>::infinity();
  for (int i : cartel) {
    const double gain = utility(s, i, wn, pn) - utility(s, i, stable.W, stable.P);
    min_gain = std::min(min_gain, gain);
  }
  return min_gain;
}

}  // namespace detail

// Randomized certification that a stable point is Higher-Order Nash stable:
// samples single-agent actions (counterparty accept/reject semantics with the
// cancel-if-strictly-better rule) and cartels with random intra-cartel
// reallocations, reporting the best improvement found.
inline DeviationReport deviation_search(const NetworkSetting& s, const StablePoint& stable,
                                        int trials, std::uint64_t seed) {
  constexpr double kTol = 1e-12;
  static constexpr double kScales[] = {1e-3, 1e-1, 1.0};
  DeviationReport report;
  report.trials = trials;
  double best_single = -std::numeric_limits<double>::infinity();
  double best_cartel = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    Rng rng(seed, static_cast<std::uint64_t>(t) + 1);
    const double scale = kScales[rng.below(3)];
    const int deviator = static_cast<int>(rng.below(s.n));
    best_single =
        std::max(best_single, detail::single_agent_action_gain(s, stable, deviator, rng, scale));
    if (s.n >= 2) {
      const int size = 2 + static_cast<int>(rng.below(std::max(1, std::min(s.n, 4) - 1)));
      std::vector<int> members(static_cast<std::size_t>(s.n));
      for (int i = 0; i < s.n; ++i) members[static_cast<std::size_t>(i)] = i;
      for (int i = 0; i < size; ++i) {
        const int pick = i + static_cast<int>(rng.below(s.n - i));
        std::swap(members[static_cast<std::size_t>(i)], members[static_cast<std::size_t>(pick)]);
      }
      members.resize(static_cast<std::size_t>(std::min(size, s.n)));
      best_cartel =
          std::max(best_cartel, detail::cartel_action_gain(s, stable, members, rng, scale));
    }
  }
  report.best_single_improvement = best_single;
  report.best_cartel_improvement = best_cartel;
  report.certified = best_single <= kTol && best_cartel <= kTol;
  return report;
}

inline const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Unique: return "Unique";
    case SolveStatus::NonUnique: return "NonUnique";
    case SolveStatus::NoStablePoint: return "NoStablePoint";
  }
  return "unknown";
}

inline nlohmann::json to_json(const SolveOutcome& outcome) {
  nlohmann::json j;
  j["status"] = to_string(outcome.status);
  j["lstsq_residual"] = outcome.lstsq_residual;
  j["null_dimension"] = outcome.null_dimension;
  std::vector<double> svs(outcome.singular_values.data(),
                          outcome.singular_values.data() + outcome.singular_values.size());
  j["singular_values"] = svs;
  if (outcome.point) {
    const MatrixXd w = outcome.point->W.dense();
    const MatrixXd p = outcome.point->P.dense();
    std::vector<double> wv, pv;
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) {
        wv.push_back(w(r, c));
        pv.push_back(p(r, c));
      }
    j["W"] = wv;
    j["P"] = pv;
    j["residual"] = outcome.point->residual;
  }
  return j;
}

}  // namespace stabnet
