#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qsb/errors.hpp"
#include "qsb/spectral.hpp"

namespace qsb {

/// Kernels are evaluated in log-space; value is exp(log_value) and may
/// underflow to zero for far-apart arguments while log_value stays finite.
struct KernelEval {
  double log_value = 0.0;
  double value = 0.0;

  static KernelEval from_log(double log_value) {
    return {log_value, std::exp(log_value)};
  }
};

namespace detail {

inline void check_times(double t0, double t) {
  require(t > t0, ErrorCode::NonMonotoneTime,
          "need t > t0, got t0=" + std::to_string(t0) + ", t=" + std::to_string(t));
}

inline double log_heat(double sq_dist, int dims, double tau) {
  return -0.5 * dims * std::log(4.0 * std::numbers::pi * tau) - sq_dist / (4.0 * tau);
}

}  // namespace detail

/// Precomputed per-dimension coefficients of κ+ for a fixed elapsed time, so
/// that many (y, z) pairs can be evaluated cheaply. Coordinates passed to
/// log_eval are eigen-coordinates (y = V x).
class KernelCoefficients {
 public:
  KernelCoefficients(const Eigen::VectorXd& d, const std::vector<int>& positive_idx,
                     const std::vector<int>& zero_idx, double tau)
      : tau_(tau), positive_idx_(positive_idx), zero_idx_(zero_idx) {
    require(tau > 0.0, ErrorCode::NonMonotoneTime, "elapsed time must be positive");
    for (int i : positive_idx_) {
      const double di = d(i);
      require(di > 0.0, ErrorCode::NonPositiveEigenvalue,
              "positive index carries d=" + std::to_string(di));
      const double s = std::sqrt(di);
      const double x = 2.0 * tau * s;
      half_diag_.push_back(0.5 * s * hyp::coth(x));
      cross_.push_back(s * hyp::csch(x));
      log_prefactor_ += 0.25 * std::log(di) - 0.5 * std::log(2.0 * std::numbers::pi) -
                        0.5 * hyp::log_sinh(x);
    }
  }

  KernelCoefficients(const SpectralQ& spec, double tau)
      : KernelCoefficients(spec.d, spec.positive_idx, spec.zero_idx, tau) {}

  double log_eval(const double* y, const double* z) const {
    double acc = log_prefactor_;
    for (std::size_t k = 0; k < positive_idx_.size(); ++k) {
      const int i = positive_idx_[k];
      acc -= half_diag_[k] * (y[i] * y[i] + z[i] * z[i]) - cross_[k] * y[i] * z[i];
    }
    if (!zero_idx_.empty()) {
      double sq = 0.0;
      for (int i : zero_idx_) sq += (y[i] - z[i]) * (y[i] - z[i]);
      acc += detail::log_heat(sq, static_cast<int>(zero_idx_.size()), tau_);
    }
    return acc;
  }

  double tau() const { return tau_; }

 private:
  double tau_;
  std::vector<int> positive_idx_;
  std::vector<int> zero_idx_;
  std::vector<double> half_diag_;
  std::vector<double> cross_;
  double log_prefactor_ = 0.0;
};

/// Heat kernel (4π(t-s))^{-n/2} exp(-|x-y|²/(4(t-s))) of ∂_t = Δ.
inline KernelEval heat_kernel(double s, const Eigen::VectorXd& x, double t,
                              const Eigen::VectorXd& y) {
  detail::check_times(s, t);
  require(x.size() == y.size(), ErrorCode::DimensionMismatch, "x and y sizes differ");
  return KernelEval::from_log(
      detail::log_heat((x - y).squaredNorm(), static_cast<int>(x.size()), t - s));
}

/// Closed-form Green's function of ∂_t η = Δη − Σ dᵢ yᵢ² η for positive d.
inline KernelEval kernel_pp(double t0, const Eigen::VectorXd& y, double t,
                            const Eigen::VectorXd& z, const Eigen::VectorXd& d_pos) {
  detail::check_times(t0, t);
  require(y.size() == d_pos.size() && z.size() == d_pos.size(),
          ErrorCode::DimensionMismatch, "y, z, d sizes differ");
  std::vector<int> all(static_cast<std::size_t>(d_pos.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const KernelCoefficients coeffs(d_pos, all, {}, t - t0);
  return KernelEval::from_log(coeffs.log_eval(y.data(), z.data()));
}

/// κ+ in eigen-coordinates: κ++ over the positive eigen-directions times the
/// heat kernel over the zero ones.
inline KernelEval kernel_p(double t0, const Eigen::VectorXd& y, double t,
                           const Eigen::VectorXd& z, const SpectralQ& spec) {
  detail::check_times(t0, t);
  require(y.size() == spec.dim && z.size() == spec.dim, ErrorCode::DimensionMismatch,
          "coordinates do not match the dimension of Q");
  const KernelCoefficients coeffs(spec, t - t0);
  return KernelEval::from_log(coeffs.log_eval(y.data(), z.data()));
}

/// κ+ in the original coordinates: kernel_p(t0, Vx, t, Vx2).
inline KernelEval kernel_q(double t0, const Eigen::VectorXd& x, double t,
                           const Eigen::VectorXd& x2, const SpectralQ& spec) {
  require(x.size() == spec.dim && x2.size() == spec.dim, ErrorCode::DimensionMismatch,
          "coordinates do not match the dimension of Q");
  return kernel_p(t0, spec.to_eigen(x), t, spec.to_eigen(x2), spec);
}

/// ∫∫ κ++ dy dz = ∏ (√dᵢ sinh(2τ√dᵢ))^{-1/2}. Returned in log-space too since
/// it underflows for long horizons.
inline KernelEval kernel_mass(double t0, double t, const Eigen::VectorXd& d_pos) {
  detail::check_times(t0, t);
  double log_mass = 0.0;
  for (Eigen::Index i = 0; i < d_pos.size(); ++i) {
    require(d_pos(i) > 0.0, ErrorCode::NonPositiveEigenvalue, "d must be positive");
    const double s = std::sqrt(d_pos(i));
    log_mass -= 0.5 * (std::log(s) + hyp::log_sinh(2.0 * (t - t0) * s));
  }
  return KernelEval::from_log(log_mass);
}

/// Mehler kernel, the d ≡ 1 case written out directly.
inline KernelEval mehler_kernel(double t0, const Eigen::VectorXd& y, double t,
                                const Eigen::VectorXd& z) {
  detail::check_times(t0, t);
  require(y.size() == z.size(), ErrorCode::DimensionMismatch, "y and z sizes differ");
  const double x = 2.0 * (t - t0);
  const double n = static_cast<double>(y.size());
  const double log_value = -0.5 * n * (std::log(2.0 * std::numbers::pi) + hyp::log_sinh(x)) +
                           hyp::csch(x) * y.dot(z) -
                           0.5 * hyp::coth(x) * (y.squaredNorm() + z.squaredNorm());
  return KernelEval::from_log(log_value);
}

struct LinearTransition {
  Eigen::MatrixXd Phi;
  Eigen::MatrixXd Gramian;
};

/// Φ = exp(τA) and Γ = ∫₀^τ exp(sA) B Bᵀ exp(sA)ᵀ ds by composite trapezoid.
inline LinearTransition linear_transition(const Eigen::MatrixXd& A,
                                          const Eigen::MatrixXd& B, double tau,
                                          int gramian_steps) {
  require(tau > 0.0, ErrorCode::NonMonotoneTime, "elapsed time must be positive");
  require(gramian_steps >= 1, ErrorCode::InvalidArgument, "gramian_steps must be >= 1");
  require(A.rows() == A.cols() && B.rows() == A.rows(), ErrorCode::DimensionMismatch,
          "A must be n x n and B must have n rows");
  const Eigen::Index n = A.rows();
  const double h = tau / gramian_steps;
  const Eigen::MatrixXd BBt = B * B.transpose();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k <= gramian_steps; ++k) {
    const Eigen::MatrixXd E = (A * (k * h)).exp();
    const double w = (k == 0 || k == gramian_steps) ? 0.5 * h : h;
    gram.noalias() += w * E * BBt * E.transpose();
  }
  return {(A * tau).exp(), 0.5 * (gram + gram.transpose())};
}

/// Transition density of dx = Ax dt + √2 B dw for time-invariant (A, B):
/// (4π)^{-n/2} det(Γ)^{-1/2} exp(-¼ (Φx0 - x1)ᵀ Γ⁻¹ (Φx0 - x1)).
inline KernelEval kernel_linear(double t0, const Eigen::VectorXd& x0, double t1,
                                const Eigen::VectorXd& x1, const Eigen::MatrixXd& A,
                                const Eigen::MatrixXd& B, int gramian_steps = 200) {
  detail::check_times(t0, t1);
  require(x0.size() == A.rows() && x1.size() == A.rows(), ErrorCode::DimensionMismatch,
          "state dimension mismatch");
  const auto [Phi, gram] = linear_transition(A, B, t1 - t0, gramian_steps);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  require(min_eig > 1e-10 * std::max(1.0, max_eig), ErrorCode::SingularGramian,
          "min eigenvalue of the Gramian is " + std::to_string(min_eig));
  const Eigen::VectorXd r = Phi * x0 - x1;
  const Eigen::LLT<Eigen::MatrixXd> chol(gram);
  const double quad = r.dot(chol.solve(r));
  const double log_det = eig.eigenvalues().array().log().sum();
  const double n = static_cast<double>(A.rows());
  return KernelEval::from_log(-0.5 * n * std::log(4.0 * std::numbers::pi) -
                              0.5 * log_det - 0.25 * quad);
}

}  // namespace qsb
