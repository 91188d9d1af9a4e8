#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "qsb/errors.hpp"

namespace qsb {

inline constexpr int kMaxHermiteDegree = 500;

/// Physicist's Hermite polynomial H_n(x), upward three-term recurrence.
inline double hermite_eval(int n, double x) {
  require(n >= 0, ErrorCode::InvalidArgument, "negative Hermite degree");
  require(n <= kMaxHermiteDegree, ErrorCode::DegreeTooLarge,
          "degree " + std::to_string(n) + " exceeds " +
              std::to_string(kMaxHermiteDegree));
  if (n == 0) return 1.0;
  double prev = 1.0;
  double curr = 2.0 * x;
  for (int k = 1; k < n; ++k) {
    const double next = 2.0 * x * curr - 2.0 * k * prev;
    prev = curr;
    curr = next;
  }
  return curr;
}

/// |∫ H_m H_n e^{-x²} dx − target| on [-12, 12] with a composite trapezoid of
/// quad_points nodes; target is 0 off the diagonal and √π 2ⁿ n! on it.
inline double orthogonality_residual(int m, int n, int quad_points) {
  require(quad_points >= 2, ErrorCode::TooFewPoints, "need at least 2 nodes");
  constexpr double lo = -12.0;
  constexpr double hi = 12.0;
  const double h = (hi - lo) / (quad_points - 1);
  double acc = 0.0;
  for (int k = 0; k < quad_points; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == quad_points - 1) ? 0.5 * h : h;
    acc += w * hermite_eval(m, x) * hermite_eval(n, x) * std::exp(-x * x);
  }
  double target = 0.0;
  if (m == n) {
    target = std::sqrt(std::numbers::pi) * std::pow(2.0, n) * std::tgamma(n + 1.0);
  }
  return std::abs(acc - target);
}

/// Truncated Hermite expansion of κ++ in eigen-coordinates: per dimension,
///   (d^{1/4}/√π) exp(-(y²+z²)√d/2 - τ√d) Σ_{k<terms} e^{-2kτ√d} H_k(d^{1/4}y) H_k(d^{1/4}z) / (2^k k!)
/// and the product over dimensions. Independent of the closed-form kernel.
inline double kernel_series_oracle(double t0, double t, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& z,
                                   const Eigen::VectorXd& d_pos, int terms) {
  require(t > t0, ErrorCode::NonMonotoneTime, "t must exceed t0");
  require(terms >= 1, ErrorCode::InvalidArgument, "terms must be >= 1");
  require(terms - 1 <= kMaxHermiteDegree, ErrorCode::DegreeTooLarge,
          std::to_string(terms) + " terms exceeds the supported degree");
  require(y.size() == d_pos.size() && z.size() == d_pos.size(),
          ErrorCode::DimensionMismatch, "y, z, d sizes differ");
  const double tau = t - t0;
  double product = 1.0;
  for (Eigen::Index i = 0; i < d_pos.size(); ++i) {
    const double d = d_pos(i);
    require(d > 0.0, ErrorCode::NonPositiveEigenvalue, "d must be positive");
    const double s = std::sqrt(d);
    const double q = std::pow(d, 0.25);
    const double a = q * y(i);
    const double b = q * z(i);
    const double rho = std::exp(-2.0 * tau * s);

    // Hermite values by recurrence alongside the coefficient ρ^k / (2^k k!).
    double ha_prev = 1.0, ha = 2.0 * a;
    double hb_prev = 1.0, hb = 2.0 * b;
    double coeff = 1.0;
    double sum = 1.0;
    for (int k = 1; k < terms; ++k) {
      coeff *= rho / (2.0 * k);
      sum += coeff * ha * hb;
      const double ha_next = 2.0 * a * ha - 2.0 * k * ha_prev;
      const double hb_next = 2.0 * b * hb - 2.0 * k * hb_prev;
      ha_prev = ha;
      ha = ha_next;
      hb_prev = hb;
      hb = hb_next;
    }
    product *= q / std::sqrt(std::numbers::pi) *
               std::exp(-0.5 * (y(i) * y(i) + z(i) * z(i)) * s - tau * s) * sum;
  }
  return product;
}

}  // namespace qsb
