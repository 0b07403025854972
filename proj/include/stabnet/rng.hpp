// Deterministic random number generation.
//
// A self-contained xoshiro256++ generator seeded through splitmix64 is used
// instead of <random> distributions because the standard library leaves
// normal/gamma sampling implementation-defined, and every experiment here
// must produce byte-identical output for a given (seed, stream) on any
// platform. Sampling algorithms: Marsaglia polar method for normals,
// Marsaglia-Tsang for gamma, Bartlett decomposition for Wishart draws.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "stabnet/errors.hpp"

namespace stabnet {

namespace detail {

inline std::uint64_t splitmix64_next(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

// xoshiro256++ stream. The optional stream index derives independent
// generators from one user-facing seed, which is how experiments give every
// Monte Carlo trial its own generator regardless of worker scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = detail::splitmix64_next(x);
    if (stream != 0) {
      std::uint64_t y = stream;
      for (auto& word : state_) word ^= detail::splitmix64_next(y);
    }
    bool all_zero = true;
    for (auto word : state_) all_zero = all_zero && word == 0;
    if (all_zero) state_[0] = 1;
  }

  std::uint64_t next() {
    const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via the Marsaglia polar method (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; the shape<1 boost uses the
  // standard U^{1/shape} reduction.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw InputError("gamma shape must be positive");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }

  // Unbiased uniform integer in [0, n).
  std::int64_t below(std::int64_t n) {
    if (n <= 0) throw InputError("below() requires a positive bound");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    for (;;) {
      const std::uint64_t r = next();
      const unsigned __int128 m = static_cast<unsigned __int128>(r) * bound;
      const std::uint64_t low = static_cast<std::uint64_t>(m);
      if (low >= bound || low >= static_cast<std::uint64_t>(-static_cast<std::int64_t>(bound)) % bound) {
        return static_cast<std::int64_t>(m >> 64);
      }
    }
  }

  // N(0, sd^2) conditioned on [lower, upper] (rejection sampling).
  double truncated_normal(double sd, double lower, double upper) {
    if (!(sd > 0.0)) throw InputError("truncated_normal requires sd > 0");
    if (!(lower < upper)) throw InputError("truncated_normal requires lower < upper");
    for (int attempt = 0; attempt < 1000000; ++attempt) {
      const double x = sd * normal();
      if (x >= lower && x <= upper) return x;
    }
    throw NumericalError("truncated_normal: acceptance region too small");
  }

 private:
  std::array<std::uint64_t, 4> state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Standard deviation of N(0, sd^2) conditioned on [lower, upper]
// (classical two-sided truncated-normal moment formula).
inline double truncated_normal_sd(double sd, double lower, double upper) {
  const auto pdf = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  const double a = lower / sd;
  const double b = upper / sd;
  const double z = cdf(b) - cdf(a);
  const double mean_term = (pdf(a) - pdf(b)) / z;
  const double var = 1.0 + (a * pdf(a) - b * pdf(b)) / z - mean_term * mean_term;
  return sd * std::sqrt(var);
}

inline Eigen::VectorXd normal_vector(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// Row-major fill order (fixed so seeded draws are reproducible).
inline Eigen::MatrixXd normal_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

// Wishart(scale, dof) draw via the Bartlett decomposition. Requires a
// symmetric positive definite scale matrix and dof >= dimension.
inline Eigen::MatrixXd wishart(Rng& rng, const Eigen::MatrixXd& scale, int dof) {
  const int n = static_cast<int>(scale.rows());
  if (scale.cols() != n) throw InputError("wishart scale must be square");
  if (dof < n) throw InputError("wishart requires dof >= dimension");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) {
    throw InputError("wishart scale must be positive definite");
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = std::sqrt(rng.chi_square(static_cast<double>(dof - i)));
    for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd la = llt.matrixL() * a;
  return la * la.transpose();
}

}  // namespace stabnet
