#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace qsb::testing {

/// Seeded generators for the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Eigen::VectorXd vector(int n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }

  /// Random orthogonal matrix from the QR factor of a Gaussian matrix.
  Eigen::MatrixXd orthogonal(int n) {
    Eigen::MatrixXd A(n, n);
    std::normal_distribution<double> g;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = g(rng_);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  }

  /// Symmetric PSD matrix with `zeros` exactly-null directions.
  Eigen::MatrixXd psd(int n, int zeros = 0, double lo = 0.1, double hi = 5.0) {
    const Eigen::MatrixXd U = orthogonal(n);
    Eigen::VectorXd lam = vector(n, lo, hi);
    for (int i = 0; i < zeros && i < n; ++i) lam(i) = 0.0;
    const Eigen::MatrixXd Q = U * lam.asDiagonal() * U.transpose();
    return 0.5 * (Q + Q.transpose());
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace qsb::testing
