#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

#include "qsb/errors.hpp"
#include "qsb/grid.hpp"
#include "qsb/sinkhorn.hpp"
#include "qsb/spectral.hpp"

namespace qsb {

inline constexpr double kFactorFloor = 1e-300;

struct Factors {
  Eigen::VectorXd phihat;
  Eigen::VectorXd phi;
};

/// The optimal drift 2∇log φ(t, ·) on the nodes, plus the nodes where φ had to
/// be floored before taking the log (the control is not meaningful there).
/// The factor 2 is what makes ρ = φ̂φ solve ∂ρ = −∇·(ρu) + Δρ when φ, φ̂ obey
/// ∂φ = −Δφ + qφ and ∂φ̂ = Δφ̂ − qφ̂.
struct ControlField {
  double t = 0.0;
  Eigen::MatrixXd grad;  // size() x dim
  std::vector<bool> floored;
};

/// A converged Sinkhorn state together with everything needed to evaluate the
/// bridge at interior times. Immutable apart from an internal memo of factor
/// vectors keyed by t (quantized to 1e-12), which is safe to query
/// concurrently.
class BridgeSolution {
 public:
  BridgeSolution(GridSpec grid, SpectralQ spec, double t0, double t1, SinkhornState state)
      : grid_(std::move(grid)),
        spec_(std::move(spec)),
        t0_(t0),
        t1_(t1),
        state_(std::move(state)),
        cache_(std::make_shared<Cache>()) {
    require(t1_ > t0_, ErrorCode::NonMonotoneTime, "need t1 > t0");
    require(state_.phihat0.size() == grid_.size() && state_.phi1.size() == grid_.size(),
            ErrorCode::DimensionMismatch, "factor vectors do not match the grid");
    require(grid_.dim == spec_.dim, ErrorCode::DimensionMismatch,
            "grid dimension does not match Q");
  }

  const GridSpec& grid() const { return grid_; }
  const SpectralQ& spec() const { return spec_; }
  const SinkhornState& state() const { return state_; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }

  /// φ̂(t) = ∫κ(t0, y, t, ·) φ̂₀(y) dy.
  Eigen::VectorXd phihat_at(double t) const {
    t = checked_time(t);
    if (t == t0_) return state_.phihat0;
    return memo(cache_->phihat, t, [&] {
      return apply_forward(assemble_kernel_matrix(grid_, t0_, t, spec_), state_.phihat0);
    });
  }

  /// φ(t) = ∫κ(t, ·, t1, y) φ₁(y) dy.
  Eigen::VectorXd phi_at(double t) const {
    t = checked_time(t);
    if (t == t1_) return state_.phi1;
    return memo(cache_->phi, t, [&] {
      return apply_backward(assemble_kernel_matrix(grid_, t, t1_, spec_), state_.phi1);
    });
  }

  Factors factors_at(double t) const { return {phihat_at(t), phi_at(t)}; }

  /// ρ_opt(t) = φ̂(t) ⊙ φ(t), not renormalized.
  Eigen::VectorXd rho_opt(double t) const {
    return phihat_at(t).cwiseProduct(phi_at(t));
  }

  ControlField control_field(double t) const {
    const Eigen::VectorXd phi = phi_at(t);
    ControlField out;
    out.t = t;
    out.floored.resize(static_cast<std::size_t>(phi.size()));
    Eigen::VectorXd log_phi(phi.size());
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      out.floored[static_cast<std::size_t>(i)] = !(phi(i) > kFactorFloor);
      log_phi(i) = std::log(std::max(phi(i), kFactorFloor));
    }
    out.grad = 2.0 * node_gradient(grid_, log_phi);
    return out;
  }

  /// u_opt(t, x) = 2∇log φ(t, x). x must stay one grid spacing inside the box.
  Eigen::VectorXd u_opt(double t, const Eigen::VectorXd& x) const {
    require(x.size() == grid_.dim, ErrorCode::DimensionMismatch,
            "query point has the wrong dimension");
    for (int k = 0; k < grid_.dim; ++k) {
      const double h = grid_.spacing[k];
      require(x(k) >= grid_.lower[k] + h - 1e-12 * h && x(k) <= grid_.upper[k] - h + 1e-12 * h,
              ErrorCode::QueryOutOfBounds, "query outside the grid interior");
    }
    return interpolate(grid_, control_field(t).grad, x);
  }

  /// The same bridge with (c·φ̂₀, φ₁/c); every physical output is unchanged.
  BridgeSolution regauged(double c) const {
    require(c > 0.0, ErrorCode::InvalidArgument, "gauge factor must be positive");
    SinkhornState s = state_;
    s.phihat0 *= c;
    s.phi1 /= c;
    return BridgeSolution(grid_, spec_, t0_, t1_, std::move(s));
  }

 private:
  struct Cache {
    std::mutex mutex;
    std::map<long long, std::shared_ptr<const Eigen::VectorXd>> phihat;
    std::map<long long, std::shared_ptr<const Eigen::VectorXd>> phi;
  };

  double checked_time(double t) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(t1_));
    require(t >= t0_ - slack && t <= t1_ + slack, ErrorCode::TimeOutOfHorizon,
            "t = " + std::to_string(t) + " outside [" + std::to_string(t0_) + ", " +
                std::to_string(t1_) + "]");
    if (std::abs(t - t0_) <= slack) return t0_;
    if (std::abs(t - t1_) <= slack) return t1_;
    return t;
  }

  template <typename Compute>
  Eigen::VectorXd memo(std::map<long long, std::shared_ptr<const Eigen::VectorXd>>& table,
                       double t, Compute&& compute) const {
    const long long key = std::llround(t * 1e12);
    {
      std::lock_guard lock(cache_->mutex);
      if (auto it = table.find(key); it != table.end()) return *it->second;
    }
    auto value = std::make_shared<const Eigen::VectorXd>(compute());
    std::lock_guard lock(cache_->mutex);
    table.emplace(key, value);
    return *value;
  }

  GridSpec grid_;
  SpectralQ spec_;
  double t0_;
  double t1_;
  SinkhornState state_;
  std::shared_ptr<Cache> cache_;
};

}  // namespace qsb
