// Domain types (settings, networks, price matrices), validation, agent
// utilities and best responses.
//
// Model conventions used throughout the library:
//   * agents are 0-based indices 0..n-1;
//   * column j of M is agent j's expected-return vector mu_j;
//   * gamma_i > 0 is agent i's risk aversion;
//   * the covariance is either one shared Sigma or one Sigma_i per agent;
//   * allowed[i] is the ordered set J_i of partners agent i may contract
//     with; membership of i itself controls the self-contract W_ii, and
//     j in J_i iff i in J_j for i != j;
//   * contract networks W are symmetric, price matrices P skew-symmetric
//     with zero diagonal; both are stored half-matrix so the symmetry is
//     structural rather than re-validated floating-point state.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "stabnet/errors.hpp"
#include "stabnet/linalg.hpp"

namespace stabnet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Symmetric contract network, packed upper triangle including the diagonal.
class Network {
 public:
  Network() : n_(0) {}
  explicit Network(int n) : n_(n), upper_(static_cast<std::size_t>(n) * (n + 1) / 2, 0.0) {
    if (n < 0) throw InputError("Network size must be nonnegative");
  }

  // Canonicalizes an arbitrary square matrix to its symmetric part.
  static Network from_dense(const MatrixXd& w) {
    const int n = static_cast<int>(w.rows());
    if (w.cols() != n) throw InputError("Network::from_dense requires a square matrix");
    Network out(n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) out.set(i, j, 0.5 * (w(i, j) + w(j, i)));
    return out;
  }

  int size() const { return n_; }

  double operator()(int i, int j) const { return upper_[index(i, j)]; }

  void set(int i, int j, double value) { upper_[index(i, j)] = value; }

  MatrixXd dense() const {
    MatrixXd w(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) w(i, j) = w(j, i) = upper_[index(i, j)];
    return w;
  }

 private:
  std::size_t index(int i, int j) const {
    if (i < 0 || j < 0 || i >= n_ || j >= n_) throw InputError("Network index out of range");
    if (i > j) std::swap(i, j);
    // Row-major packed upper triangle.
    return static_cast<std::size_t>(i) * (2 * n_ - i - 1) / 2 + static_cast<std::size_t>(j);
  }

  int n_;
  std::vector<double> upper_;
};

// Skew-symmetric price matrix, packed strict upper triangle; P_ii = 0 always
// (prices are pairwise transfers).
class PriceMatrix {
 public:
  PriceMatrix() : n_(0) {}
  explicit PriceMatrix(int n) : n_(n), upper_(static_cast<std::size_t>(n) * (n - 1) / 2, 0.0) {
    if (n < 0) throw InputError("PriceMatrix size must be nonnegative");
  }

  // Canonicalizes an arbitrary square matrix to its skew part, zero diagonal.
  static PriceMatrix from_dense(const MatrixXd& p) {
    const int n = static_cast<int>(p.rows());
    if (p.cols() != n) throw InputError("PriceMatrix::from_dense requires a square matrix");
    PriceMatrix out(n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) out.set(i, j, 0.5 * (p(i, j) - p(j, i)));
    return out;
  }

  int size() const { return n_; }

  double operator()(int i, int j) const {
    if (i == j) {
      if (i < 0 || i >= n_) throw InputError("PriceMatrix index out of range");
      return 0.0;
    }
    return i < j ? upper_[index(i, j)] : -upper_[index(j, i)];
  }

  // Sets P_ij = value (and implicitly P_ji = -value); requires i != j.
  void set(int i, int j, double value) {
    if (i == j) throw InputError("PriceMatrix diagonal is structurally zero");
    if (i < j) {
      upper_[index(i, j)] = value;
    } else {
      upper_[index(j, i)] = -value;
    }
  }

  MatrixXd dense() const {
    MatrixXd p = MatrixXd::Zero(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i + 1; j < n_; ++j) {
        const double v = upper_[index(i, j)];
        p(i, j) = v;
        p(j, i) = -v;
      }
    return p;
  }

 private:
  std::size_t index(int i, int j) const {
    if (i < 0 || j <= i || j >= n_) throw InputError("PriceMatrix index out of range");
    return static_cast<std::size_t>(i) * (2 * n_ - i - 3) / 2 + static_cast<std::size_t>(j) - 1;
  }

  int n_;
  std::vector<double> upper_;
};

struct NetworkSetting {
  int n = 0;
  MatrixXd M;                              // column j = mu_j
  VectorXd gamma;                          // risk aversions
  std::vector<MatrixXd> sigmas;            // size 1: shared; size n: per agent
  std::vector<std::vector<int>> allowed;   // sorted J_i, may contain i

  bool shared_sigma() const { return sigmas.size() == 1; }

  const MatrixXd& sigma(int i) const {
    return sigmas.size() == 1 ? sigmas[0] : sigmas[static_cast<std::size_t>(i)];
  }

  bool edge_allowed(int i, int j) const {
    const auto& row = allowed[static_cast<std::size_t>(i)];
    return std::binary_search(row.begin(), row.end(), j);
  }
};

struct StablePoint {
  Network W;
  PriceMatrix P;
  double residual = 0.0;  // max over agents of the infinity-norm best-response gap
};

// All-pairs permitted sets (including self-contracts).
inline std::vector<std::vector<int>> full_allowed(int n) {
  std::vector<std::vector<int>> allowed(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    allowed[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) allowed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = j;
  }
  return allowed;
}

// Ordered free pair list F = {(i, j) : i < j, edge permitted}.
inline std::vector<std::pair<int, int>> free_pairs(const NetworkSetting& s) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < s.n; ++i)
    for (int j = i + 1; j < s.n; ++j)
      if (s.edge_allowed(i, j)) pairs.emplace_back(i, j);
  return pairs;
}

// Throws InputError with a diagnostic message if the setting violates any
// structural invariant. PD tolerance is scale-invariant:
// smallest eigenvalue > 1e-10 * largest. Ops that never invert covariance
// blocks (the shared-covariance eigendecomposition route drops null modes)
// may pass require_pd = false to accept positive SEMIdefinite covariance.
inline void validate(const NetworkSetting& s, bool require_pd = true) {
  if (s.n <= 0) throw InputError("setting: agent count must be positive");
  const int n = s.n;
  if (s.M.rows() != n || s.M.cols() != n) throw InputError("setting: M must be n x n");
  if (!s.M.allFinite()) throw InputError("setting: M entries must be finite");
  if (s.gamma.size() != n) throw InputError("setting: gamma must have length n");
  for (int i = 0; i < n; ++i) {
    if (!(s.gamma(i) > 0.0) || !std::isfinite(s.gamma(i))) {
      throw InputError("setting: gamma[" + std::to_string(i) + "] must be positive");
    }
  }
  if (s.sigmas.size() != 1 && s.sigmas.size() != static_cast<std::size_t>(n)) {
    throw InputError("setting: sigma must be shared (1 matrix) or per-agent (n matrices)");
  }
  for (std::size_t k = 0; k < s.sigmas.size(); ++k) {
    const MatrixXd& sig = s.sigmas[k];
    if (sig.rows() != n || sig.cols() != n) {
      throw InputError("setting: sigma[" + std::to_string(k) + "] must be n x n");
    }
    if (!sig.allFinite()) {
      throw InputError("setting: sigma[" + std::to_string(k) + "] has non-finite entries");
    }
    if ((sig - sig.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * std::max(1.0, sig.cwiseAbs().maxCoeff())) {
      throw InputError("setting: sigma[" + std::to_string(k) + "] is not symmetric");
    }
    if (require_pd) {
      if (!linalg::is_positive_definite(sig, 1e-10)) {
        throw InputError("setting: sigma[" + std::to_string(k) +
                         "] is not positive definite (tolerance 1e-10 relative)");
      }
    } else {
      const linalg::SymEig eig = linalg::sym_eig(sig);
      const double top = std::max(eig.values(n - 1), 0.0);
      if (eig.values(0) < -1e-10 * std::max(top, 1.0)) {
        throw InputError("setting: sigma[" + std::to_string(k) +
                         "] is not positive semidefinite");
      }
    }
  }
  if (s.allowed.size() != static_cast<std::size_t>(n)) {
    throw InputError("setting: allowed must list one partner set per agent");
  }
  for (int i = 0; i < n; ++i) {
    const auto& row = s.allowed[static_cast<std::size_t>(i)];
    if (!std::is_sorted(row.begin(), row.end())) {
      throw InputError("setting: allowed[" + std::to_string(i) + "] must be sorted");
    }
    if (std::adjacent_find(row.begin(), row.end()) != row.end()) {
      throw InputError("setting: allowed[" + std::to_string(i) + "] has duplicates");
    }
    for (int j : row) {
      if (j < 0 || j >= n) {
        throw InputError("setting: allowed[" + std::to_string(i) + "] index out of range");
      }
      if (j != i && !s.edge_allowed(j, i)) {
        throw InputError("setting: allowed sets must be symmetric (agents " +
                         std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
}

// Masked inverse Q_i = Psi_i^T (2 gamma_i Psi_i Sigma_i Psi_i^T)^{-1} Psi_i,
// returned as a full n x n matrix that is zero off the J_i x J_i block.
inline MatrixXd q_matrix(const NetworkSetting& s, int i) {
  if (i < 0 || i >= s.n) throw InputError("q_matrix: agent index out of range");
  const auto& idx = s.allowed[static_cast<std::size_t>(i)];
  MatrixXd q = MatrixXd::Zero(s.n, s.n);
  const int k = static_cast<int>(idx.size());
  if (k == 0) return q;
  MatrixXd block(k, k);
  const MatrixXd& sig = s.sigma(i);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      block(a, b) = 2.0 * s.gamma(i) * sig(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  const linalg::SymEig eig = linalg::sym_eig(block);
  const double hi = eig.values(k - 1);
  const double lo = eig.values(0);
  if (!(hi > 0.0) || lo <= 1e-14 * hi) {
    throw NumericalError("q_matrix: masked covariance block for agent " + std::to_string(i) +
                         " is numerically singular");
  }
  const MatrixXd inv =
      eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose();
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      q(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]) = inv(a, b);
  return q;
}

// Mean-variance utility g_i(W, P) = w_i^T (mu_i - P e_i) - gamma_i w_i^T
// Sigma_i w_i, where w_i is column i of W.
inline double utility(const NetworkSetting& s, int i, const Network& w, const PriceMatrix& p) {
  if (i < 0 || i >= s.n) throw InputError("utility: agent index out of range");
  if (w.size() != s.n || p.size() != s.n) throw InputError("utility: dimension mismatch");
  VectorXd wi(s.n), pi(s.n);
  for (int r = 0; r < s.n; ++r) {
    wi(r) = w(r, i);
    pi(r) = p(r, i);
  }
  const VectorXd net = s.M.col(i) - pi;
  return wi.dot(net) - s.gamma(i) * wi.dot(s.sigma(i) * wi);
}

// Utility-maximizing contract vector for agent i at prices P:
// Q_i (mu_i - P e_i), zero on prohibited entries.
inline VectorXd best_response(const NetworkSetting& s, int i, const PriceMatrix& p) {
  if (i < 0 || i >= s.n) throw InputError("best_response: agent index out of range");
  if (p.size() != s.n) throw InputError("best_response: dimension mismatch");
  VectorXd pi(s.n);
  for (int r = 0; r < s.n; ++r) pi(r) = p(r, i);
  const VectorXd net = s.M.col(i) - pi;
  return q_matrix(s, i) * net;
}

// Uncentered sample covariance (1/m) X X^T of an n x m sample matrix.
inline MatrixXd sample_covariance(const MatrixXd& x) {
  if (x.cols() < 1) throw InputError("sample_covariance requires at least one sample");
  return (x * x.transpose()) / static_cast<double>(x.cols());
}

}  // namespace stabnet
