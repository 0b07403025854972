// Covariance recovery from observed network time series: the quadratic
// objective over the unit-trace spectrahedron, projected-gradient solvers
// (single and piecewise), and mean-series recovery.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stabnet/core.hpp"
#include "stabnet/errors.hpp"
#include "stabnet/linalg.hpp"
#include "stabnet/rng.hpp"

namespace stabnet {

struct NetworkSequence {
  std::vector<Network> snapshots;         // W(1..T)
  std::vector<std::vector<int>> mask;     // shared permitted sets J_i

  int n() const { return snapshots.empty() ? 0 : snapshots.front().size(); }

  bool entry_allowed(int i, int j) const {
    const auto& row = mask[static_cast<std::size_t>(i)];
    return std::binary_search(row.begin(), row.end(), j);
  }
};

inline void validate_sequence(const NetworkSequence& seq) {
  if (seq.snapshots.empty()) throw InputError("sequence: no snapshots");
  const int n = seq.snapshots.front().size();
  if (n <= 0) throw InputError("sequence: empty networks");
  for (const auto& w : seq.snapshots) {
    if (w.size() != n) throw InputError("sequence: snapshot dimensions differ");
  }
  if (seq.mask.size() != static_cast<std::size_t>(n)) {
    throw InputError("sequence: mask must list one partner set per agent");
  }
  for (int i = 0; i < n; ++i) {
    const auto& row = seq.mask[static_cast<std::size_t>(i)];
    if (!std::is_sorted(row.begin(), row.end())) throw InputError("sequence: mask rows must be sorted");
    for (int j : row) {
      if (j < 0 || j >= n) throw InputError("sequence: mask index out of range");
      if (j != i && !seq.entry_allowed(j, i)) throw InputError("sequence: mask must be symmetric");
    }
  }
}

struct SigmaEstimate {
  MatrixXd Sigma;         // symmetric PSD, trace 1
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;    // all increments zero: any Sigma is optimal
  int null_directions = 0;    // zero-curvature directions of the objective
  std::vector<double> objective_path;  // value after each accepted step
};

struct InferOptions {
  double step = 0.0;      // <= 0: exact quadratic line search for the trial step
  int max_iter = 5000;
  double tol = 1e-12;     // relative objective decrease
};

namespace detail {

// Zeroes prohibited entries (mask complement) of a symmetric expression.
inline MatrixXd apply_mask(const NetworkSequence& seq, const MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  MatrixXd out = a;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!seq.entry_allowed(i, j)) out(i, j) = 0.0;
  return out;
}

inline bool mask_is_full(const NetworkSequence& seq) {
  const int n = seq.n();
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(seq.mask[static_cast<std::size_t>(i)].size()) != n) return false;
  }
  return true;
}

inline std::vector<MatrixXd> increments(const NetworkSequence& seq) {
  std::vector<MatrixXd> deltas;
  for (std::size_t t = 0; t + 1 < seq.snapshots.size(); ++t) {
    deltas.push_back(seq.snapshots[t + 1].dense() - seq.snapshots[t].dense());
  }
  return deltas;
}

struct QuadraticModel {
  const NetworkSequence* seq;
  std::vector<MatrixXd> deltas;
  bool full_mask;

  MatrixXd residual(const MatrixXd& sigma, std::size_t t) const {
    const MatrixXd inner = sigma * deltas[t] + deltas[t] * sigma;
    return full_mask ? inner : apply_mask(*seq, inner);
  }

  double value(const MatrixXd& sigma) const {
    double total = 0.0;
    for (std::size_t t = 0; t < deltas.size(); ++t) total += residual(sigma, t).squaredNorm();
    return total;
  }

  MatrixXd gradient(const MatrixXd& sigma) const {
    const int n = static_cast<int>(sigma.rows());
    MatrixXd g = MatrixXd::Zero(n, n);
    for (std::size_t t = 0; t < deltas.size(); ++t) {
      const MatrixXd a = residual(sigma, t);
      g += 2.0 * (a * deltas[t] + deltas[t] * a);
    }
    return g;
  }

  // Quadratic form q(D) with value(S + D) = value(S) + <grad(S), D> + q(D).
  double curvature(const MatrixXd& d) const {
    double total = 0.0;
    for (std::size_t t = 0; t < deltas.size(); ++t) {
      const MatrixXd b = full_mask ? MatrixXd(d * deltas[t] + deltas[t] * d)
                                   : apply_mask(*seq, d * deltas[t] + deltas[t] * d);
      total += b.squaredNorm();
    }
    return total;
  }
};

// Orthonormal basis of symmetric traceless n x n matrices.
inline std::vector<MatrixXd> traceless_sym_basis(int n) {
  std::vector<MatrixXd> basis;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      MatrixXd e = MatrixXd::Zero(n, n);
      e(i, j) = e(j, i) = inv_sqrt2;
      basis.push_back(e);
    }
  // Diagonal traceless directions: d_k proportional to diag(1,..,1,-k,0,..).
  for (int k = 1; k < n; ++k) {
    MatrixXd e = MatrixXd::Zero(n, n);
    const double norm = std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) e(i, i) = 1.0 / norm;
    e(k, k) = -static_cast<double>(k) / norm;
    basis.push_back(e);
  }
  return basis;
}

// Counts zero-curvature directions of the objective restricted to the
// trace-0 symmetric tangent space (relative threshold 1e-10).
inline int count_null_directions(const QuadraticModel& model, int n) {
  const auto basis = traceless_sym_basis(n);
  const int d = static_cast<int>(basis.size());
  std::vector<std::vector<MatrixXd>> images(static_cast<std::size_t>(d));
  for (int k = 0; k < d; ++k) {
    for (std::size_t t = 0; t < model.deltas.size(); ++t) {
      MatrixXd b = basis[static_cast<std::size_t>(k)] * model.deltas[t] +
                   model.deltas[t] * basis[static_cast<std::size_t>(k)];
      if (!model.full_mask) b = apply_mask(*model.seq, b);
      images[static_cast<std::size_t>(k)].push_back(b);
    }
  }
  MatrixXd h(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      double v = 0.0;
      for (std::size_t t = 0; t < model.deltas.size(); ++t) {
        v += (images[static_cast<std::size_t>(a)][t].array() *
              images[static_cast<std::size_t>(b)][t].array())
                 .sum();
      }
      h(a, b) = h(b, a) = v;
    }
  const linalg::SymEig eig = linalg::sym_eig(h);
  const double top = std::max(eig.values(d - 1), 0.0);
  int nulls = 0;
  for (int k = 0; k < d; ++k) {
    if (eig.values(k) <= 1e-10 * std::max(top, 1.0)) ++nulls;
  }
  return nulls;
}

}  // namespace detail

// Sum over increments of || masked(Sigma dW + dW Sigma) ||_F^2.
inline double sdp_objective(const NetworkSequence& seq, const MatrixXd& sigma) {
  validate_sequence(seq);
  if (sigma.rows() != seq.n() || sigma.cols() != seq.n()) {
    throw InputError("sdp_objective: Sigma dimension mismatch");
  }
  detail::QuadraticModel model{&seq, detail::increments(seq), detail::mask_is_full(seq)};
  return model.value(linalg::symmetric_part(sigma));
}

// Projected gradient descent for the covariance SDP. Trial steps use the
// exact line minimum of the quadratic model (doubled, so backtracking lands
// on the minimizer); acceptance requires a descent inner product and the
// Armijo condition with constant 1e-4; projection is the exact Euclidean
// map onto {Sigma PSD, tr Sigma = 1}.
inline SigmaEstimate infer_sigma(const NetworkSequence& seq, const InferOptions& opts = {}) {
  validate_sequence(seq);
  if (seq.snapshots.size() < 2) throw InputError("infer_sigma requires T >= 2 snapshots");
  const int n = seq.n();
  detail::QuadraticModel model{&seq, detail::increments(seq), detail::mask_is_full(seq)};

  SigmaEstimate est;
  est.Sigma = MatrixXd::Identity(n, n) / static_cast<double>(n);

  double delta_scale = 0.0;
  for (const auto& d : model.deltas) delta_scale = std::max(delta_scale, d.cwiseAbs().maxCoeff());
  if (delta_scale == 0.0) {
    est.degenerate = true;
    est.converged = true;
    est.objective = 0.0;
    est.null_directions = static_cast<int>(detail::traceless_sym_basis(n).size());
    return est;
  }

  double f = model.value(est.Sigma);
  est.objective_path.push_back(f);
  for (int it = 0; it < opts.max_iter; ++it) {
    const MatrixXd g = model.gradient(est.Sigma);
    double trial = opts.step > 0.0 ? opts.step : 1.0;
    if (opts.step <= 0.0) {
      const double curvature = model.curvature(g);
      trial = curvature > 0.0 ? g.squaredNorm() / curvature : 1.0;
    }
    double fnew = f;
    MatrixXd snew = est.Sigma;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const MatrixXd candidate = linalg::spectrahedron_project(est.Sigma - trial * g);
      const double ip = (g.array() * (candidate - est.Sigma).array()).sum();
      const double fc = model.value(candidate);
      if (ip <= 0.0 && fc <= f + 1e-4 * ip) {
        snew = candidate;
        fnew = fc;
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    est.iterations = it + 1;
    if (!accepted) {
      est.converged = true;  // no feasible descent: projected stationary point
      break;
    }
    const double decrease = f - fnew;
    est.Sigma = snew;
    f = fnew;
    est.objective_path.push_back(f);
    if (decrease <= opts.tol * std::max(f, 1e-300)) {
      est.converged = true;
      break;
    }
  }
  est.objective = f;
  est.null_directions = detail::count_null_directions(model, n);
  return est;
}

// Mean-series recovery under Gamma = I: H(t) = 2 (W(t) Sigma + Sigma W(t)),
// which at stable points equals M(t) + M(t)^T (only the symmetric part of
// the mean matrix is identifiable).
inline std::vector<MatrixXd> infer_means(const NetworkSequence& seq, const MatrixXd& sigma) {
  validate_sequence(seq);
  if (sigma.rows() != seq.n() || sigma.cols() != seq.n()) {
    throw InputError("infer_means: Sigma dimension mismatch");
  }
  std::vector<MatrixXd> out;
  out.reserve(seq.snapshots.size());
  for (const auto& w : seq.snapshots) {
    const MatrixXd wd = w.dense();
    out.push_back(2.0 * (wd * sigma + sigma * wd));
  }
  return out;
}

// Piecewise-constant covariance with fused segments: minimizes the sum of
// per-segment objectives plus nu * sum_j ||Sigma_{j+1} - Sigma_j||_F over the
// product of spectrahedra. The fusion term is smoothed as
// sqrt(||D||^2 + mu^2) - mu with mu = 1e-9 so the joint problem stays
// differentiable; nu = 0 and single-segment inputs reduce exactly to
// independent infer_sigma runs.
inline std::vector<SigmaEstimate> infer_sigma_piecewise(const NetworkSequence& seq,
                                                        const std::vector<int>& breakpoints,
                                                        double nu,
                                                        const InferOptions& opts = {}) {
  validate_sequence(seq);
  const int big_t = static_cast<int>(seq.snapshots.size());
  if (big_t < 2) throw InputError("infer_sigma_piecewise requires T >= 2 snapshots");
  for (std::size_t k = 0; k < breakpoints.size(); ++k) {
    if (breakpoints[k] <= 1 || breakpoints[k] >= big_t) {
      throw InputError("infer_sigma_piecewise: breakpoints must lie strictly inside (1, T)");
    }
    if (k > 0 && breakpoints[k] <= breakpoints[k - 1]) {
      throw InputError("infer_sigma_piecewise: breakpoints must be strictly increasing");
    }
  }
  if (nu < 0.0) throw InputError("infer_sigma_piecewise: nu must be nonnegative");

  // Segment s covers 1-based snapshot times [starts[s], starts[s+1]).
  std::vector<int> starts{1};
  for (int b : breakpoints) starts.push_back(b);
  starts.push_back(big_t + 1);
  const int segments = static_cast<int>(starts.size()) - 1;

  std::vector<NetworkSequence> pieces(static_cast<std::size_t>(segments));
  for (int sgi = 0; sgi < segments; ++sgi) {
    auto& piece = pieces[static_cast<std::size_t>(sgi)];
    piece.mask = seq.mask;
    for (int t = starts[static_cast<std::size_t>(sgi)]; t < starts[static_cast<std::size_t>(sgi) + 1]; ++t) {
      piece.snapshots.push_back(seq.snapshots[static_cast<std::size_t>(t - 1)]);
    }
    if (piece.snapshots.size() < 2) {
      throw InputError("infer_sigma_piecewise: every segment needs at least 2 snapshots");
    }
  }

  if (segments == 1 || nu == 0.0) {
    std::vector<SigmaEstimate> out;
    for (const auto& piece : pieces) out.push_back(infer_sigma(piece, opts));
    return out;
  }

  const int n = seq.n();
  constexpr double kMu = 1e-9;
  std::vector<detail::QuadraticModel> models;
  models.reserve(static_cast<std::size_t>(segments));
  for (const auto& piece : pieces) {
    models.push_back(detail::QuadraticModel{&piece, detail::increments(piece),
                                            detail::mask_is_full(piece)});
  }

  std::vector<MatrixXd> sig(static_cast<std::size_t>(segments),
                            MatrixXd::Identity(n, n) / static_cast<double>(n));
  const auto total_value = [&](const std::vector<MatrixXd>& x) {
    double v = 0.0;
    for (int sgi = 0; sgi < segments; ++sgi) v += models[static_cast<std::size_t>(sgi)].value(x[static_cast<std::size_t>(sgi)]);
    for (int sgi = 0; sgi + 1 < segments; ++sgi) {
      const double d2 = (x[static_cast<std::size_t>(sgi) + 1] - x[static_cast<std::size_t>(sgi)]).squaredNorm();
      v += nu * (std::sqrt(d2 + kMu * kMu) - kMu);
    }
    return v;
  };
  const auto total_gradient = [&](const std::vector<MatrixXd>& x) {
    std::vector<MatrixXd> g(static_cast<std::size_t>(segments));
    for (int sgi = 0; sgi < segments; ++sgi) g[static_cast<std::size_t>(sgi)] = models[static_cast<std::size_t>(sgi)].gradient(x[static_cast<std::size_t>(sgi)]);
    for (int sgi = 0; sgi + 1 < segments; ++sgi) {
      const MatrixXd diff = x[static_cast<std::size_t>(sgi) + 1] - x[static_cast<std::size_t>(sgi)];
      const double denom = std::sqrt(diff.squaredNorm() + kMu * kMu);
      g[static_cast<std::size_t>(sgi)] -= nu * diff / denom;
      g[static_cast<std::size_t>(sgi) + 1] += nu * diff / denom;
    }
    return g;
  };

  double f = total_value(sig);
  int iterations = 0;
  bool converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    const auto g = total_gradient(sig);
    double gnorm2 = 0.0;
    for (const auto& gb : g) gnorm2 += gb.squaredNorm();
    double trial = opts.step > 0.0 ? opts.step : 0.0;
    if (opts.step <= 0.0) {
      double curvature = 0.0;
      for (int sgi = 0; sgi < segments; ++sgi) curvature += models[static_cast<std::size_t>(sgi)].curvature(g[static_cast<std::size_t>(sgi)]);
      trial = curvature > 0.0 ? gnorm2 / curvature : 1.0;
    }
    bool accepted = false;
    double fnew = f;
    std::vector<MatrixXd> snew = sig;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<MatrixXd> cand(static_cast<std::size_t>(segments));
      double ip = 0.0;
      for (int sgi = 0; sgi < segments; ++sgi) {
        cand[static_cast<std::size_t>(sgi)] =
            linalg::spectrahedron_project(sig[static_cast<std::size_t>(sgi)] - trial * g[static_cast<std::size_t>(sgi)]);
        ip += (g[static_cast<std::size_t>(sgi)].array() *
               (cand[static_cast<std::size_t>(sgi)] - sig[static_cast<std::size_t>(sgi)]).array())
                  .sum();
      }
      const double fc = total_value(cand);
      if (ip <= 0.0 && fc <= f + 1e-4 * ip) {
        snew = cand;
        fnew = fc;
        accepted = true;
        break;
      }
      trial *= 0.5;
    }
    iterations = it + 1;
    if (!accepted) {
      converged = true;
      break;
    }
    const double decrease = f - fnew;
    sig = snew;
    f = fnew;
    if (decrease <= opts.tol * std::max(f, 1e-300)) {
      converged = true;
      break;
    }
  }

  std::vector<SigmaEstimate> out(static_cast<std::size_t>(segments));
  for (int sgi = 0; sgi < segments; ++sgi) {
    auto& est = out[static_cast<std::size_t>(sgi)];
    est.Sigma = sig[static_cast<std::size_t>(sgi)];
    est.objective = models[static_cast<std::size_t>(sgi)].value(est.Sigma);
    est.iterations = iterations;
    est.converged = converged;
    est.null_directions = detail::count_null_directions(models[static_cast<std::size_t>(sgi)], n);
  }
  return out;
}

// Synthetic generator used by tests and fixtures: mean matrices follow an
// entrywise Gaussian random walk with per-step scale sigma_step, and each
// snapshot is the shared-covariance stable network under Gamma = I.
inline NetworkSequence generate_brownian_sequence(const MatrixXd& sigma0, int big_t,
                                                  double sigma_step, std::uint64_t seed) {
  const int n = static_cast<int>(sigma0.rows());
  if (big_t < 1) throw InputError("generate_brownian_sequence: T must be positive");
  Rng rng(seed);
  NetworkSequence seq;
  seq.mask = full_allowed(n);
  MatrixXd m = normal_matrix(rng, n, n);
  const VectorXd gamma = VectorXd::Ones(n);
  for (int t = 0; t < big_t; ++t) {
    const MatrixXd h = 0.5 * (m + m.transpose());
    seq.snapshots.push_back(Network::from_dense(linalg::lyapunov_weighted_solve(sigma0, gamma, h)));
    m += sigma_step * normal_matrix(rng, n, n);
  }
  return seq;
}

}  // namespace stabnet
