// Shared dense linear algebra: symmetric eigendecompositions, the weighted
// Lyapunov solver used by every shared-covariance path, Euclidean projections
// onto the probability simplex / unit-trace spectrahedron, and extreme
// eigenvalue routines (dense and power iteration).
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "stabnet/errors.hpp"

namespace stabnet::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SymEig {
  VectorXd values;   // ascending
  MatrixXd vectors;  // columns
};

inline MatrixXd symmetric_part(const MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

inline MatrixXd skew_part(const MatrixXd& a) {
  return 0.5 * (a - a.transpose());
}

inline SymEig sym_eig(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(symmetric_part(s));
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigendecomposition failed");
  }
  return SymEig{solver.eigenvalues(), solver.eigenvectors()};
}

// Scale-invariant positive definiteness: smallest eigenvalue must exceed
// rel_tol times the largest.
inline bool is_positive_definite(const MatrixXd& s, double rel_tol = 1e-10) {
  if (s.rows() != s.cols() || s.rows() == 0) return false;
  const SymEig eig = sym_eig(s);
  const double lo = eig.values(0);
  const double hi = eig.values(eig.values.size() - 1);
  return hi > 0.0 && lo > rel_tol * hi;
}

// Solves Sigma * X * Gamma + Gamma * X * Sigma = H for symmetric X, with
// Gamma = diag(gamma) > 0 and Sigma symmetric (PSD allowed). Substituting
// X = Gamma^{-1/2} Y Gamma^{-1/2} reduces to the Lyapunov equation
// S Y + Y S = Gamma^{-1/2} H Gamma^{-1/2} with S = Gamma^{-1/2} Sigma
// Gamma^{-1/2}, solved in the eigenbasis of S. Eigenvalue-pair denominators
// at or below drop_tol * spectral scale are treated as zero, yielding the
// minimum-norm solution on the solvable complement.
inline MatrixXd lyapunov_weighted_solve(const MatrixXd& sigma, const VectorXd& gamma,
                                        const MatrixXd& h, double drop_tol = 1e-12) {
  const int n = static_cast<int>(sigma.rows());
  if (sigma.cols() != n || h.rows() != n || h.cols() != n || gamma.size() != n) {
    throw InputError("lyapunov_weighted_solve: dimension mismatch");
  }
  for (int i = 0; i < n; ++i) {
    if (!(gamma(i) > 0.0)) throw InputError("lyapunov_weighted_solve: gamma must be positive");
  }
  const VectorXd gram_inv_sqrt = gamma.array().rsqrt();
  const MatrixXd s =
      gram_inv_sqrt.asDiagonal() * symmetric_part(sigma) * gram_inv_sqrt.asDiagonal();
  const SymEig eig = sym_eig(s);
  const MatrixXd ht = eig.vectors.transpose() *
                      (gram_inv_sqrt.asDiagonal() * symmetric_part(h) * gram_inv_sqrt.asDiagonal()) *
                      eig.vectors;
  const double scale = std::max(std::abs(eig.values(0)), std::abs(eig.values(n - 1)));
  const double cutoff = drop_tol * std::max(scale, 1e-300);
  MatrixXd y(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double denom = eig.values(i) + eig.values(j);
      y(i, j) = denom > cutoff ? ht(i, j) / denom : 0.0;
    }
  }
  const MatrixXd x = eig.vectors * y * eig.vectors.transpose();
  return gram_inv_sqrt.asDiagonal() * x * gram_inv_sqrt.asDiagonal();
}

// Same equation solved through the explicit n^2 x n^2 Kronecker system
// (Gamma (x) Sigma + Sigma (x) Gamma) vec(X) = vec(H). Cubic in n^2; used as
// an independent cross-check route, not for large n.
inline MatrixXd lyapunov_kron_solve(const MatrixXd& sigma, const VectorXd& gamma,
                                    const MatrixXd& h) {
  const int n = static_cast<int>(sigma.rows());
  MatrixXd big = MatrixXd::Zero(n * n, n * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      // Block (a, b) of Gamma (x) Sigma is gamma_a * delta_ab * Sigma;
      // block of Sigma (x) Gamma is sigma_ab * Gamma.
      if (a == b) big.block(a * n, b * n, n, n) += gamma(a) * sigma;
      big.block(a * n, b * n, n, n) += sigma(b, a) * MatrixXd(gamma.asDiagonal());
    }
  }
  Eigen::Map<const VectorXd> hv(h.data(), n * n);
  Eigen::PartialPivLU<MatrixXd> lu(big);
  const VectorXd xv = lu.solve(hv);
  return Eigen::Map<const MatrixXd>(xv.data(), n, n);
}

// Euclidean projection onto the probability simplex {x >= 0, sum x = 1}.
inline VectorXd simplex_project(const VectorXd& v) {
  const int n = static_cast<int>(v.size());
  if (n == 0) throw InputError("simplex_project: empty vector");
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double theta = 0.0;
  int rho = -1;
  double running = 0.0;
  for (int k = 0; k < n; ++k) {
    running += u[static_cast<std::size_t>(k)];
    const double t = (1.0 - running) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] + t > 0.0) {
      rho = k;
      css = running;
    }
  }
  theta = (1.0 - css) / static_cast<double>(rho + 1);
  return (v.array() + theta).max(0.0);
}

// Euclidean (Frobenius) projection onto the spectrahedron
// {X symmetric PSD, tr X = 1}: eigendecompose and project the raw eigenvalue
// vector onto the simplex. The trace shift must happen before any clipping;
// clipping first is not the nearest-point map and creates spurious fixed
// points for gradient methods.
inline MatrixXd spectrahedron_project(const MatrixXd& s) {
  const SymEig eig = sym_eig(s);
  const VectorXd lam = simplex_project(eig.values);
  return eig.vectors * lam.asDiagonal() * eig.vectors.transpose();
}

struct EigenRange {
  double min;
  double max;
};

inline EigenRange eigen_range_dense(const MatrixXd& s) {
  const SymEig eig = sym_eig(s);
  return EigenRange{eig.values(0), eig.values(eig.values.size() - 1)};
}

// Largest eigenvalue of a symmetric matrix by power iteration with a fixed
// deterministic start vector and Rayleigh-quotient convergence test.
inline double lambda_max_power(const MatrixXd& s, double tol = 1e-12, int max_iter = 200000) {
  const int n = static_cast<int>(s.rows());
  VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    v(i) = 1.0 + 0.618033988749895 * std::sin(static_cast<double>(3 * i + 1));
  }
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    VectorXd w = s * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(s * w);
    const bool settled = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
    v = w;
    lambda = next;
    if (settled && it > 2) break;
  }
  return lambda;
}

// Extreme eigenvalues by two power iterations: lambda_max on a shifted copy
// that makes the spectrum nonnegative, then lambda_min from the reflected
// operator. Valid for any symmetric matrix.
inline EigenRange eigen_range_power(const MatrixXd& s, double tol = 1e-12) {
  const double bound = s.cwiseAbs().rowwise().sum().maxCoeff();  // Gershgorin
  const int n = static_cast<int>(s.rows());
  const MatrixXd id = MatrixXd::Identity(n, n);
  const double top_shifted = lambda_max_power(s + bound * id, tol);
  const double lam_max = top_shifted - bound;
  const double reflected = lambda_max_power(bound * id - s, tol);
  const double lam_min = bound - reflected;
  return EigenRange{lam_min, lam_max};
}

}  // namespace stabnet::linalg
