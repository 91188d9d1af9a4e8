#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "qsb/errors.hpp"
#include "qsb/grid.hpp"

namespace qsb {

/// log max(u/v) − log min(u/v); invariant under positive rescaling of either.
inline double hilbert_metric(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  require(u.size() == v.size() && u.size() > 0, ErrorCode::DimensionMismatch,
          "vectors must be non-empty and of equal length");
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    require(u(i) > 0.0 && v(i) > 0.0, ErrorCode::NonPositiveEntry,
            "entry " + std::to_string(i) + " is not positive");
    const double r = std::log(u(i)) - std::log(v(i));
    hi = std::max(hi, r);
    lo = std::min(lo, r);
  }
  return hi - lo;
}

struct SinkhornOptions {
  double tol = 1e-10;
  int max_epochs = 5000;
  double density_floor = 1e-300;
};

struct SinkhornEpoch {
  int epoch = 0;
  double hilbert = 0.0;
  double residual0 = 0.0;  // ‖φ̂₀ ⊙ backward(φ₁) − ρ₀‖₁ after this epoch
  double residual1 = 0.0;  // ‖φ₁ ⊙ forward(φ̂₀) − ρ₁‖₁ after this epoch
};

struct SinkhornState {
  Eigen::VectorXd phihat0;
  Eigen::VectorXd phi1;
  int epoch = 0;
  std::vector<double> hilbert_trace;
  std::vector<SinkhornEpoch> history;
  bool converged = false;
  double residual0 = 0.0;
  double residual1 = 0.0;

  /// exp of the least-squares slope of log(hilbert_trace) against epoch,
  /// i.e. the empirical linear contraction ratio. Zero entries are skipped.
  double contraction_ratio(int skip = 2) const {
    std::vector<double> xs, ys;
    for (std::size_t k = static_cast<std::size_t>(std::max(0, skip));
         k < hilbert_trace.size(); ++k) {
      if (hilbert_trace[k] > 0.0) {
        xs.push_back(static_cast<double>(k));
        ys.push_back(std::log(hilbert_trace[k]));
      }
    }
    if (xs.size() < 2) return 0.0;
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      sx += xs[k];
      sy += ys[k];
      sxx += xs[k] * xs[k];
      sxy += xs[k] * ys[k];
    }
    return std::exp((n * sxy - sx * sy) / (n * sxx - sx * sx));
  }
};

namespace detail {

inline double weighted_l1(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          const Eigen::VectorXd& w) {
  return w.dot((a - b).cwiseAbs());
}

}  // namespace detail

/// Dynamic Sinkhorn recursion for the discretized Schrödinger system. Both
/// densities are node values on K.grid (see discretize); they are floored
/// before any Hadamard division. The loop stops when successive φ̂₀ iterates
/// are within tol in Hilbert's metric; on max_epochs the state is returned
/// with converged = false.
inline SinkhornState sinkhorn_solve(const Eigen::VectorXd& rho0, const Eigen::VectorXd& rho1,
                                    const KernelMatrix& K,
                                    const SinkhornOptions& opts = {}) {
  const Eigen::Index N = K.values.rows();
  require(rho0.size() == N && rho1.size() == N, ErrorCode::DimensionMismatch,
          "densities do not match the kernel matrix");
  require(opts.tol > 0.0, ErrorCode::InvalidArgument, "tol must be positive");
  require(opts.max_epochs >= 1, ErrorCode::InvalidArgument, "max_epochs must be >= 1");
  for (Eigen::Index i = 0; i < N; ++i) {
    require(rho0(i) >= 0.0 && rho1(i) >= 0.0 && std::isfinite(rho0(i)) &&
                std::isfinite(rho1(i)),
            ErrorCode::NonPositiveDensity, "densities must be finite and nonnegative");
  }
  const Eigen::VectorXd r0 = rho0.cwiseMax(opts.density_floor);
  const Eigen::VectorXd r1 = rho1.cwiseMax(opts.density_floor);
  const Eigen::VectorXd& w = K.grid.weights;

  SinkhornState s;
  s.phihat0 = Eigen::VectorXd::Ones(N);
  Eigen::VectorXd phihat1 = apply_forward(K, s.phihat0);
  for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    s.phi1 = r1.cwiseQuotient(phihat1);
    const Eigen::VectorXd phi0 = apply_backward(K, s.phi1);
    Eigen::VectorXd next = r0.cwiseQuotient(phi0);

    const double dist = hilbert_metric(next, s.phihat0);
    // Gauge: unit weighted mass for φ̂₀, compensated in φ₁.
    const double scale = w.dot(next);
    next /= scale;
    s.phi1 *= scale;
    s.phihat0 = std::move(next);

    phihat1 = apply_forward(K, s.phihat0);
    SinkhornEpoch rec;
    rec.epoch = epoch;
    rec.hilbert = dist;
    rec.residual0 = detail::weighted_l1(s.phihat0.cwiseProduct(phi0 * scale), rho0, w);
    rec.residual1 = detail::weighted_l1(s.phi1.cwiseProduct(phihat1), rho1, w);
    s.history.push_back(rec);
    s.hilbert_trace.push_back(dist);
    s.epoch = epoch;
    s.residual0 = rec.residual0;
    s.residual1 = rec.residual1;
    if (dist < opts.tol) {
      s.converged = true;
      break;
    }
  }
  // Final residuals recomputed from scratch on the returned pair.
  s.residual0 = detail::weighted_l1(s.phihat0.cwiseProduct(apply_backward(K, s.phi1)), rho0, w);
  s.residual1 = detail::weighted_l1(s.phi1.cwiseProduct(apply_forward(K, s.phihat0)), rho1, w);
  return s;
}

}  // namespace qsb
