// Shared fixtures for the unit tests: the two-firm worked example, seeded
// random settings, and scratch-directory management.
#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "stabnet/core.hpp"
#include "stabnet/rng.hpp"

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Two firms, M = [[0, 3], [1, 4]], Sigma = diag(1, 2), gamma = (1, 1), all
// edges permitted. Stable point: W = [[0, 2/3], [2/3, 1]], P_01 = 5/3.
inline stabnet::NetworkSetting two_firm() {
  stabnet::NetworkSetting s;
  s.n = 2;
  s.M.resize(2, 2);
  s.M << 0.0, 3.0, 1.0, 4.0;
  s.gamma = VectorXd::Ones(2);
  s.sigmas = {MatrixXd(VectorXd(Eigen::Vector2d(1.0, 2.0)).asDiagonal())};
  s.allowed = stabnet::full_allowed(2);
  return s;
}

// Random well-conditioned PD matrix A A^T / n + 0.5 I, scaled to unit-ish size.
inline MatrixXd random_pd(stabnet::Rng& rng, int n) {
  const MatrixXd a = stabnet::normal_matrix(rng, n, n);
  return a * a.transpose() / static_cast<double>(n) + 0.5 * MatrixXd::Identity(n, n);
}

// Random shared-covariance setting with all edges permitted.
inline stabnet::NetworkSetting random_shared_setting(stabnet::Rng& rng, int n) {
  stabnet::NetworkSetting s;
  s.n = n;
  s.M = stabnet::normal_matrix(rng, n, n);
  s.gamma.resize(n);
  for (int i = 0; i < n; ++i) s.gamma(i) = 0.5 + rng.uniform() * 1.5;
  s.sigmas = {random_pd(rng, n)};
  s.allowed = stabnet::full_allowed(n);
  return s;
}

// Fresh scratch directory under the system temp root, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag = "case") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("stabnet_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string dir() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
