#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qsb/errors.hpp"
#include "qsb/kernels.hpp"
#include "qsb/spectral.hpp"

namespace qsb {

/// Minimal action of ½|v|² + 2Σdᵢqᵢ² between y at 0 and z at τ:
/// Σ √dᵢ [coth(2τ√dᵢ)(yᵢ² + zᵢ²) − 2 csch(2τ√dᵢ) yᵢzᵢ].
inline double action_distance(const Eigen::VectorXd& y, const Eigen::VectorXd& z, double tau,
                              const Eigen::VectorXd& d_pos) {
  require(tau > 0.0, ErrorCode::NonPositiveTau, "tau must be positive");
  require(y.size() == d_pos.size() && z.size() == d_pos.size(), ErrorCode::DimensionMismatch,
          "y, z, d sizes differ");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d_pos.size(); ++i) {
    require(d_pos(i) > 0.0, ErrorCode::NonPositiveEigenvalue, "d must be positive");
    const double s = std::sqrt(d_pos(i));
    const double x = 2.0 * tau * s;
    acc += s * (hyp::coth(x) * (y(i) * y(i) + z(i) * z(i)) - 2.0 * hyp::csch(x) * y(i) * z(i));
  }
  return acc;
}

/// Piecewise-linear path with K segments minimizing the discretized action
/// Σ_k h [½((γ_{k+1}−γ_k)/h)² + d(γ_k² + γ_{k+1}²)], one coordinate at a time.
/// The interior nodes solve a tridiagonal system (Thomas algorithm).
struct DiscreteAction {
  double value = 0.0;
  std::vector<Eigen::VectorXd> path;  // K+1 nodes
};

inline DiscreteAction discrete_action_min(const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                          double tau, const Eigen::VectorXd& d_pos,
                                          int segments = 400) {
  require(tau > 0.0, ErrorCode::NonPositiveTau, "tau must be positive");
  require(segments >= 2, ErrorCode::InvalidArgument, "need at least two segments");
  require(y.size() == d_pos.size() && z.size() == d_pos.size(), ErrorCode::DimensionMismatch,
          "y, z, d sizes differ");
  const int K = segments;
  const double h = tau / K;
  const Eigen::Index m = d_pos.size();
  DiscreteAction out;
  out.path.assign(static_cast<std::size_t>(K) + 1, Eigen::VectorXd::Zero(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double d = d_pos(i);
    require(d >= 0.0, ErrorCode::NonPositiveEigenvalue, "d must be nonnegative");
    const int n = K - 1;
    const double diag = 2.0 / h + 4.0 * d * h;
    const double off = -1.0 / h;
    std::vector<double> c(static_cast<std::size_t>(n)), r(static_cast<std::size_t>(n), 0.0);
    r[0] += y(i) / h;
    r[n - 1] += z(i) / h;
    // Forward sweep.
    c[0] = off / diag;
    r[0] /= diag;
    for (int k = 1; k < n; ++k) {
      const double denom = diag - off * c[k - 1];
      c[k] = off / denom;
      r[k] = (r[k] - off * r[k - 1]) / denom;
    }
    std::vector<double> g(static_cast<std::size_t>(K) + 1);
    g[0] = y(i);
    g[K] = z(i);
    for (int k = n - 2; k >= 0; --k) r[k] -= c[k] * r[k + 1];
    for (int k = 0; k < n; ++k) g[k + 1] = r[k];
    for (int k = 0; k < K; ++k) {
      const double v = (g[k + 1] - g[k]) / h;
      out.value += h * (0.5 * v * v + d * (g[k] * g[k] + g[k + 1] * g[k + 1]));
    }
    for (int k = 0; k <= K; ++k) out.path[k](i) = g[k];
  }
  return out;
}

namespace detail {

inline SpectralQ analytic_spec(const Eigen::MatrixXd& Q, const Eigen::VectorXd& x,
                               bool semidefinite) {
  SpectralQ spec = eigendecompose_q(Q);
  require(x.size() == spec.dim, ErrorCode::DimensionMismatch, "x does not match Q");
  require(semidefinite || spec.zero_idx.empty(), ErrorCode::SingularQ,
          "Q has " + std::to_string(spec.zero_idx.size()) + " eigenvalue(s) at or below zero_tol");
  return spec;
}

/// log(√d cosh X + sinh X) without overflow, accurate as X → 0.
inline double log_cosh_sinh_mix(double sqrt_d, double X) {
  const double e = std::exp(-2.0 * X);
  return X - std::numbers::ln2 + std::log(sqrt_d * (1.0 + e) - std::expm1(-2.0 * X));
}

}  // namespace detail

/// log of ∫κ(0, ·, t, x) dy, the forward propagation of the constant 1:
/// −¼ xᵀ√(2Q) tanh(t√(2Q)) x − ½ log det cosh(t√(2Q)), evaluated per
/// eigenvalue of Q/2. Zero directions contribute nothing (the heat kernel
/// preserves constants) and are only accepted when semidefinite is set.
inline double log_phihat_unity(double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& Q,
                               bool semidefinite = false) {
  require(t >= 0.0, ErrorCode::NonMonotoneTime, "t must be >= 0");
  const SpectralQ spec = detail::analytic_spec(Q, x, semidefinite);
  const Eigen::VectorXd y = spec.to_eigen(x);
  double acc = 0.0;
  for (int i : spec.positive_idx) {
    const double s = std::sqrt(spec.d(i));
    const double X = 2.0 * t * s;
    acc -= 0.5 * s * std::tanh(X) * y(i) * y(i) + 0.5 * hyp::log_cosh(X);
  }
  return acc;
}

inline double phihat_unity(double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& Q,
                           bool semidefinite = false) {
  return std::exp(log_phihat_unity(t, x, Q, semidefinite));
}

/// log of the forward propagation of the standard normal density N(0, I).
/// Per positive eigenvalue d with X = 2t√d:
///   d^{1/4} / √(2π(√d cosh X + sinh X)) · exp(−½ c y²),
///   c = √d (√d + coth X) / (1 + √d coth X).
/// Zero directions (semidefinite only) give N(0, 1 + 2t).
inline double log_phihat_gaussian(double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& Q,
                                  bool semidefinite = false) {
  require(t > 0.0, ErrorCode::NonMonotoneTime, "t must be > 0");
  const SpectralQ spec = detail::analytic_spec(Q, x, semidefinite);
  const Eigen::VectorXd y = spec.to_eigen(x);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (int i : spec.positive_idx) {
    const double d = spec.d(i);
    const double s = std::sqrt(d);
    const double X = 2.0 * t * s;
    const double ct = hyp::coth(X);
    const double c = s * (s + ct) / (1.0 + s * ct);
    acc += 0.25 * std::log(d) - 0.5 * log2pi - 0.5 * detail::log_cosh_sinh_mix(s, X) -
           0.5 * c * y(i) * y(i);
  }
  for (int i : spec.zero_idx) {
    const double var = 1.0 + 2.0 * t;
    acc += -0.5 * (log2pi + std::log(var)) - 0.5 * y(i) * y(i) / var;
  }
  return acc;
}

inline double phihat_gaussian(double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& Q,
                              bool semidefinite = false) {
  return std::exp(log_phihat_gaussian(t, x, Q, semidefinite));
}

/// max |κ++(d_scale·1) − κ₀| / κ₀ over (y, z) pairs at elapsed time τ. At
/// d_scale = 0 the all-zero spectrum routes through κ+, i.e. κ₀ itself.
inline double heat_limit_check(double d_scale,
                               const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs,
                               double tau = 1.0) {
  require(d_scale >= 0.0, ErrorCode::InvalidArgument, "d_scale must be >= 0");
  double worst = 0.0;
  for (const auto& [y, z] : pairs) {
    const KernelEval heat = heat_kernel(0.0, y, tau, z);
    KernelEval k;
    if (d_scale == 0.0) {
      const SpectralQ zero = eigendecompose_q(Eigen::MatrixXd::Zero(y.size(), y.size()));
      k = kernel_p(0.0, y, tau, z, zero);
    } else {
      k = kernel_pp(0.0, y, tau, z, Eigen::VectorXd::Constant(y.size(), d_scale));
    }
    worst = std::max(worst, std::abs(std::expm1(k.log_value - heat.log_value)));
  }
  return worst;
}

}  // namespace qsb
