#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qsb/errors.hpp"

namespace qsb {

// Hyperbolic functions of a strictly positive argument that stay finite for
// any double. Above kAsymptoticArg the exponential asymptotics are exact to
// double precision and sinh itself would eventually overflow (near 710).
namespace hyp {

inline constexpr double kAsymptoticArg = 30.0;

inline double coth(double x) {
  return x > kAsymptoticArg ? 1.0 : 1.0 / std::tanh(x);
}

inline double csch(double x) {
  return x > kAsymptoticArg ? 2.0 * std::exp(-x) : 1.0 / std::sinh(x);
}

inline double log_sinh(double x) {
  return x > kAsymptoticArg ? x - std::numbers::ln2 : std::log(std::sinh(x));
}

inline double log_cosh(double x) {
  x = std::abs(x);
  return x - std::numbers::ln2 + std::log1p(std::exp(-2.0 * x));
}

}  // namespace hyp

/// Eigendecomposition of Q/2 = Vᵀ diag(d) V. Rows of V are eigenvectors, so
/// eigen-coordinates are y = V x. Indices are 0-based and follow the
/// ascending order of d; eigenvalues at or below zero_tol are exactly zero.
struct SpectralQ {
  int dim = 0;
  Eigen::MatrixXd V;
  Eigen::VectorXd d;
  std::vector<int> positive_idx;
  std::vector<int> zero_idx;
  double zero_tol = 0.0;

  Eigen::VectorXd to_eigen(const Eigen::VectorXd& x) const { return V * x; }
  Eigen::VectorXd from_eigen(const Eigen::VectorXd& y) const {
    return V.transpose() * y;
  }

  Eigen::VectorXd positive_eigenvalues() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(positive_idx.size()));
    for (std::size_t k = 0; k < positive_idx.size(); ++k) {
      out(static_cast<Eigen::Index>(k)) = d(positive_idx[k]);
    }
    return out;
  }

  bool positive_definite() const { return zero_idx.empty(); }
};

/// Asymmetry beyond this (relative to max|Q|) is treated as a malformed
/// input rather than round-off and rejected.
inline constexpr double kSymmetryTolerance = 1e-8;

inline SpectralQ eigendecompose_q(const Eigen::MatrixXd& Q,
                                  std::optional<double> zero_tol = std::nullopt) {
  require(Q.rows() == Q.cols() && Q.rows() > 0, ErrorCode::DimensionMismatch,
          "Q must be a non-empty square matrix");
  require(Q.allFinite(), ErrorCode::InvalidArgument, "Q has non-finite entries");
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  const double asym = (Q - Q.transpose()).cwiseAbs().maxCoeff();
  require(asym <= kSymmetryTolerance * scale, ErrorCode::NotSymmetric,
          "max |Q - Q^T| = " + std::to_string(asym));

  const Eigen::MatrixXd half = 0.25 * (Q + Q.transpose());
  const int n = static_cast<int>(Q.rows());

  SpectralQ out;
  out.dim = n;
  if (half.isZero(0.0)) {
    out.V = Eigen::MatrixXd::Identity(n, n);
    out.d = Eigen::VectorXd::Zero(n);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(half);
    out.V = solver.eigenvectors().transpose();
    out.d = solver.eigenvalues();
  }

  const double max_eig = out.d.maxCoeff();
  out.zero_tol = zero_tol.value_or(1e-10 * std::max(1.0, max_eig));
  require(out.zero_tol >= 0.0, ErrorCode::InvalidArgument, "zero_tol must be >= 0");
  for (int i = 0; i < n; ++i) {
    require(out.d(i) >= -out.zero_tol, ErrorCode::NegativeEigenvalue,
            "eigenvalue of Q/2 = " + std::to_string(out.d(i)) + " (Q is not PSD)");
    if (out.d(i) <= out.zero_tol) {
      out.d(i) = 0.0;
      out.zero_idx.push_back(i);
    } else {
      out.positive_idx.push_back(i);
    }
  }
  return out;
}

/// The 2m x 2m matrix of the κ++ exponent,
///   [ √D coth(2τ√D)   -√D csch(2τ√D) ]
///   [ -√D csch(2τ√D)   √D coth(2τ√D) ],
/// with the diagonal hyperbolic values kept alongside.
struct MatrixM {
  int m = 0;
  double tau = 0.0;
  Eigen::VectorXd d;
  Eigen::VectorXd coth_vals;
  Eigen::VectorXd csch_vals;
  Eigen::MatrixXd blocks;

  /// Eigenvalues of each 2x2 block, √d tanh(τ√d) and √d coth(τ√d), in a form
  /// that keeps full relative accuracy when 2τ√d is tiny.
  Eigen::VectorXd block_eigenvalues() const {
    Eigen::VectorXd out(2 * m);
    for (int i = 0; i < m; ++i) {
      const double s = std::sqrt(d(i));
      out(2 * i) = s * std::tanh(tau * s);
      out(2 * i + 1) = s * hyp::coth(tau * s);
    }
    return out;
  }

  double min_eigenvalue() const { return block_eigenvalues().minCoeff(); }

  double determinant() const { return block_eigenvalues().prod(); }

  /// (y,z)ᵀ M (y,z), assembled dimension by dimension.
  double quadratic_form(const Eigen::VectorXd& y, const Eigen::VectorXd& z) const {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
      const double s = std::sqrt(d(i));
      acc += s * (coth_vals(i) * (y(i) * y(i) + z(i) * z(i)) -
                  2.0 * csch_vals(i) * y(i) * z(i));
    }
    return acc;
  }
};

inline MatrixM build_matrix_m(const Eigen::VectorXd& d_pos, double tau) {
  require(tau > 0.0, ErrorCode::NonPositiveTau, "tau = " + std::to_string(tau));
  require(d_pos.size() > 0, ErrorCode::DimensionMismatch, "empty eigenvalue vector");
  for (Eigen::Index i = 0; i < d_pos.size(); ++i) {
    require(d_pos(i) > 0.0, ErrorCode::NonPositiveEigenvalue,
            "d[" + std::to_string(i) + "] = " + std::to_string(d_pos(i)));
  }
  MatrixM M;
  M.m = static_cast<int>(d_pos.size());
  M.tau = tau;
  M.d = d_pos;
  M.coth_vals.resize(M.m);
  M.csch_vals.resize(M.m);
  M.blocks = Eigen::MatrixXd::Zero(2 * M.m, 2 * M.m);
  for (int i = 0; i < M.m; ++i) {
    const double s = std::sqrt(d_pos(i));
    const double x = 2.0 * tau * s;
    M.coth_vals(i) = hyp::coth(x);
    M.csch_vals(i) = hyp::csch(x);
    M.blocks(i, i) = s * M.coth_vals(i);
    M.blocks(M.m + i, M.m + i) = s * M.coth_vals(i);
    M.blocks(i, M.m + i) = -s * M.csch_vals(i);
    M.blocks(M.m + i, i) = -s * M.csch_vals(i);
  }
  return M;
}

struct SymplecticCheck {
  bool ok = false;
  double residual = 0.0;
};

/// Strips the D^{1/4} congruence from M to recover S = M⁽¹⁾M⁽²⁾ and reports
/// max |SᵀJS - J|. The check reads M.blocks, so a corrupted M shows up here.
inline SymplecticCheck symplectic_factor_check(const MatrixM& M) {
  const int m = M.m;
  Eigen::VectorXd inv_quarter(2 * m);
  for (int i = 0; i < m; ++i) {
    inv_quarter(i) = std::pow(M.d(i), -0.25);
    inv_quarter(m + i) = inv_quarter(i);
  }
  const Eigen::MatrixXd S =
      inv_quarter.asDiagonal() * M.blocks * inv_quarter.asDiagonal();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  J.topRightCorner(m, m) = Eigen::MatrixXd::Identity(m, m);
  J.bottomLeftCorner(m, m) = -Eigen::MatrixXd::Identity(m, m);
  SymplecticCheck out;
  out.residual = (S.transpose() * J * S - J).cwiseAbs().maxCoeff();
  out.ok = out.residual < 1e-8;
  return out;
}

}  // namespace qsb
