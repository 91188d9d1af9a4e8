#pragma once

#include <Eigen/Dense>

#include "qsb/bridge.hpp"
#include "qsb/grid.hpp"
#include "qsb/sinkhorn.hpp"
#include "qsb/spectral.hpp"

namespace qsb::testing {

inline Gaussian gauss1(double mean, double sd) {
  return {Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, sd * sd)};
}

/// Two narrow bumps at ±1 pushed into N(0, 0.5²) over [0, 1].
inline DensitySpec fig5_rho0() {
  return GaussianMixture{{0.5, 0.5}, {gauss1(-1, 0.05), gauss1(1, 0.05)}};
}
inline DensitySpec fig5_rho1() { return gauss1(0, 0.5); }

inline GridSpec fig5_grid(int points = 801) { return build_grid({-8.0}, {8.0}, {points}); }

inline BridgeSolution solve_1d(double q, const DensitySpec& rho0, const DensitySpec& rho1,
                               const GridSpec& grid, double t0 = 0.0, double t1 = 1.0,
                               const SinkhornOptions& opts = {}) {
  SpectralQ spec = eigendecompose_q(Eigen::MatrixXd::Constant(1, 1, q));
  const KernelMatrix K = assemble_kernel_matrix(grid, t0, t1, spec);
  SinkhornState state = sinkhorn_solve(discretize(rho0, grid), discretize(rho1, grid), K, opts);
  return BridgeSolution(grid, std::move(spec), t0, t1, std::move(state));
}

inline BridgeSolution fig5_solution(double q = 2.0) {
  return solve_1d(q, fig5_rho0(), fig5_rho1(), fig5_grid());
}

}  // namespace qsb::testing
