#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "qsb/errors.hpp"
#include "qsb/kernels.hpp"
#include "qsb/parallel.hpp"
#include "qsb/spectral.hpp"

namespace qsb {

inline constexpr int kMinPointsPerDim = 16;
inline constexpr Eigen::Index kMaxGridNodes = 4096;

/// Uniform tensor-product grid in 1 or 2 dimensions. Nodes are flattened
/// row-major (the last dimension varies fastest); weights are the tensorized
/// composite trapezoid rule.
struct GridSpec {
  int dim = 0;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> counts;
  std::vector<double> spacing;
  Eigen::MatrixXd points;  // size() x dim
  Eigen::VectorXd weights;

  Eigen::Index size() const { return points.rows(); }

  Eigen::VectorXd node(Eigen::Index i) const { return points.row(i).transpose(); }

  Eigen::Index flat_index(int i0, int i1 = 0) const {
    return dim == 1 ? i0 : static_cast<Eigen::Index>(i0) * counts[1] + i1;
  }

  double cell_volume() const {
    double v = 1.0;
    for (double h : spacing) v *= h;
    return v;
  }
};

inline GridSpec build_grid(const std::vector<double>& lower,
                           const std::vector<double>& upper,
                           const std::vector<int>& counts) {
  const std::size_t dim = lower.size();
  require(dim == 1 || dim == 2, ErrorCode::InvalidArgument, "grid must be 1D or 2D");
  require(upper.size() == dim && counts.size() == dim, ErrorCode::DimensionMismatch,
          "bounds and counts must have one entry per dimension");
  Eigen::Index total = 1;
  for (std::size_t k = 0; k < dim; ++k) {
    require(std::isfinite(lower[k]) && std::isfinite(upper[k]) && lower[k] < upper[k],
            ErrorCode::InvalidBounds,
            "bounds [" + std::to_string(lower[k]) + ", " + std::to_string(upper[k]) + "]");
    require(counts[k] >= kMinPointsPerDim, ErrorCode::TooFewPoints,
            "need at least " + std::to_string(kMinPointsPerDim) + " points per dimension");
    total *= counts[k];
  }
  require(total <= kMaxGridNodes, ErrorCode::GridTooLarge,
          std::to_string(total) + " nodes exceeds the dense cap of " +
              std::to_string(kMaxGridNodes));

  GridSpec g;
  g.dim = static_cast<int>(dim);
  g.lower = lower;
  g.upper = upper;
  g.counts = counts;
  std::vector<std::vector<double>> axis(dim), axis_w(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const int c = counts[k];
    const double h = (upper[k] - lower[k]) / (c - 1);
    g.spacing.push_back(h);
    for (int i = 0; i < c; ++i) {
      axis[k].push_back(i == c - 1 ? upper[k] : lower[k] + i * h);
      axis_w[k].push_back((i == 0 || i == c - 1) ? 0.5 * h : h);
    }
  }
  g.points.resize(total, g.dim);
  g.weights.resize(total);
  if (dim == 1) {
    for (int i = 0; i < counts[0]; ++i) {
      g.points(i, 0) = axis[0][i];
      g.weights(i) = axis_w[0][i];
    }
  } else {
    for (int i = 0; i < counts[0]; ++i) {
      for (int j = 0; j < counts[1]; ++j) {
        const Eigen::Index idx = g.flat_index(i, j);
        g.points(idx, 0) = axis[0][i];
        g.points(idx, 1) = axis[1][j];
        g.weights(idx) = axis_w[0][i] * axis_w[1][j];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Endpoint densities

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Gaussian> components;
};

/// Values on a uniform tensor grid of its own (row-major, last dimension
/// fastest). Evaluated off-grid by (bi)linear interpolation, zero outside.
struct Tabulated {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> counts;
  std::vector<double> values;
};

using DensitySpec = std::variant<Gaussian, GaussianMixture, Tabulated>;

inline int density_dim(const DensitySpec& rho) {
  return std::visit(
      [](const auto& r) -> int {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return static_cast<int>(r.mean.size());
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          return r.components.empty() ? 0
                                      : static_cast<int>(r.components.front().mean.size());
        } else {
          return static_cast<int>(r.lower.size());
        }
      },
      rho);
}

inline double gaussian_pdf(const Gaussian& g, const Eigen::VectorXd& x) {
  const Eigen::LLT<Eigen::MatrixXd> chol(g.covariance);
  require(chol.info() == Eigen::Success, ErrorCode::InvalidArgument,
          "Gaussian covariance must be positive definite");
  const Eigen::VectorXd r = x - g.mean;
  const Eigen::VectorXd s = chol.matrixL().solve(r);
  const double log_det = 2.0 * chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double n = static_cast<double>(x.size());
  return std::exp(-0.5 * s.squaredNorm() - 0.5 * log_det -
                  0.5 * n * std::log(2.0 * std::numbers::pi));
}

namespace detail {

inline double tabulated_value(const Tabulated& tab, const Eigen::VectorXd& x) {
  const std::size_t dim = tab.lower.size();
  std::vector<int> base(dim);
  std::vector<double> frac(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    if (x(static_cast<Eigen::Index>(k)) < tab.lower[k] ||
        x(static_cast<Eigen::Index>(k)) > tab.upper[k]) {
      return 0.0;
    }
    const double h = (tab.upper[k] - tab.lower[k]) / (tab.counts[k] - 1);
    const double u = (x(static_cast<Eigen::Index>(k)) - tab.lower[k]) / h;
    base[k] = std::clamp(static_cast<int>(std::floor(u)), 0, tab.counts[k] - 2);
    frac[k] = u - base[k];
  }
  if (dim == 1) {
    return (1.0 - frac[0]) * tab.values[base[0]] + frac[0] * tab.values[base[0] + 1];
  }
  const auto at = [&](int i, int j) {
    return tab.values[static_cast<std::size_t>(i) * tab.counts[1] + j];
  };
  const int i = base[0];
  const int j = base[1];
  return (1 - frac[0]) * (1 - frac[1]) * at(i, j) + frac[0] * (1 - frac[1]) * at(i + 1, j) +
         (1 - frac[0]) * frac[1] * at(i, j + 1) + frac[0] * frac[1] * at(i + 1, j + 1);
}

}  // namespace detail

inline void validate_density(const DensitySpec& rho) {
  std::visit(
      [](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          require(r.covariance.rows() == r.mean.size() && r.covariance.cols() == r.mean.size(),
                  ErrorCode::DimensionMismatch, "covariance does not match mean");
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          require(!r.components.empty() && r.weights.size() == r.components.size(),
                  ErrorCode::InvalidArgument, "mixture needs one weight per component");
          double total = 0.0;
          for (double w : r.weights) {
            require(w >= 0.0, ErrorCode::InvalidArgument, "negative mixture weight");
            total += w;
          }
          require(total > 0.0, ErrorCode::InvalidArgument, "mixture weights sum to zero");
        } else {
          const std::size_t dim = r.lower.size();
          require(dim == 1 || dim == 2, ErrorCode::InvalidArgument,
                  "tabulated density must be 1D or 2D");
          std::size_t expected = 1;
          for (std::size_t k = 0; k < dim; ++k) {
            require(r.counts[k] >= 2 && r.lower[k] < r.upper[k], ErrorCode::InvalidBounds,
                    "bad tabulated axis");
            expected *= static_cast<std::size_t>(r.counts[k]);
          }
          require(r.values.size() == expected, ErrorCode::DimensionMismatch,
                  "tabulated value count does not match its grid");
        }
      },
      rho);
}

/// Pointwise (unnormalized for Tabulated) density value.
inline double density_value(const DensitySpec& rho, const Eigen::VectorXd& x) {
  return std::visit(
      [&](const auto& r) -> double {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return gaussian_pdf(r, x);
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          double total = 0.0, acc = 0.0;
          for (std::size_t k = 0; k < r.components.size(); ++k) {
            acc += r.weights[k] * gaussian_pdf(r.components[k], x);
            total += r.weights[k];
          }
          return acc / total;
        } else {
          return detail::tabulated_value(r, x);
        }
      },
      rho);
}

/// Node values of ρ on the grid, clamped at zero and rescaled so that the
/// quadrature-weighted sum is one.
inline Eigen::VectorXd discretize(const DensitySpec& rho, const GridSpec& grid) {
  validate_density(rho);
  require(density_dim(rho) == grid.dim, ErrorCode::DimensionMismatch,
          "density dimension does not match the grid");
  Eigen::VectorXd v(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    v(i) = std::max(0.0, density_value(rho, grid.node(i)));
  }
  const double mass = grid.weights.dot(v);
  require(mass > 0.0 && std::isfinite(mass), ErrorCode::NonPositiveDensity,
          "density has no mass on the grid");
  return v / mass;
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Exact moments for the parametric variants, trapezoid moments for tables.
inline Moments density_moments(const DensitySpec& rho) {
  return std::visit(
      [](const auto& r) -> Moments {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return {r.mean, r.covariance};
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          const Eigen::Index n = r.components.front().mean.size();
          double total = 0.0;
          Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
          for (std::size_t k = 0; k < r.components.size(); ++k) {
            mean += r.weights[k] * r.components[k].mean;
            total += r.weights[k];
          }
          mean /= total;
          Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
          for (std::size_t k = 0; k < r.components.size(); ++k) {
            const Eigen::VectorXd dm = r.components[k].mean - mean;
            cov += r.weights[k] / total * (r.components[k].covariance + dm * dm.transpose());
          }
          return {mean, cov};
        } else {
          // Trapezoid on the table's own nodes.
          const std::size_t dim = r.lower.size();
          const Eigen::Index n = static_cast<Eigen::Index>(dim);
          Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
          Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
          double mass = 0.0;
          const int c0 = r.counts[0];
          const int c1 = dim == 2 ? r.counts[1] : 1;
          for (int i = 0; i < c0; ++i) {
            for (int j = 0; j < c1; ++j) {
              Eigen::VectorXd x(n);
              double w = 1.0;
              const int idx[2] = {i, j};
              for (std::size_t k = 0; k < dim; ++k) {
                const double h = (r.upper[k] - r.lower[k]) / (r.counts[k] - 1);
                x(static_cast<Eigen::Index>(k)) = r.lower[k] + idx[k] * h;
                w *= (idx[k] == 0 || idx[k] == r.counts[k] - 1) ? 0.5 * h : h;
              }
              const double v = std::max(0.0, r.values[static_cast<std::size_t>(i) * c1 + j]);
              mass += w * v;
              mean += w * v * x;
              second += w * v * x * x.transpose();
            }
          }
          mean /= mass;
          return {mean, second / mass - mean * mean.transpose()};
        }
      },
      rho);
}

/// Symmetric box [-L, L]^dim with L = max(8, 6·(largest std) + (largest |mean|)).
inline std::vector<double> default_half_width(const DensitySpec& rho0,
                                              const DensitySpec& rho1) {
  double L = 8.0;
  for (const DensitySpec* rho : {&rho0, &rho1}) {
    const Moments mo = density_moments(*rho);
    const double max_std = std::sqrt(mo.covariance.diagonal().maxCoeff());
    L = std::max(L, 6.0 * max_std + mo.mean.cwiseAbs().maxCoeff());
  }
  return std::vector<double>(static_cast<std::size_t>(density_dim(rho0)), L);
}

/// True when every boundary node of the discretized density is below 1e-12.
inline bool tails_negligible(const GridSpec& grid, const Eigen::VectorXd& values,
                             double threshold = 1e-12) {
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    bool boundary = false;
    for (int k = 0; k < grid.dim; ++k) {
      const double x = grid.points(i, k);
      boundary = boundary || x == grid.lower[k] || x == grid.upper[k];
    }
    if (boundary && values(i) > threshold) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Kernel matrix

/// K(i, j) = κ+(t0, node_i, t1, node_j) in original coordinates (no weights).
/// Entries that would underflow are floored at the smallest normal double so
/// that every entry stays strictly positive.
struct KernelMatrix {
  Eigen::MatrixXd values;
  double t0 = 0.0;
  double t1 = 0.0;
  SpectralQ spec;
  GridSpec grid;
};

inline KernelMatrix assemble_kernel_matrix(const GridSpec& grid, double t0, double t1,
                                           const SpectralQ& spec) {
  detail::check_times(t0, t1);
  require(grid.dim == spec.dim, ErrorCode::DimensionMismatch,
          "grid dimension does not match Q");
  const Eigen::Index N = grid.size();
  const KernelCoefficients coeffs(spec, t1 - t0);
  // Row-major copy of the nodes in eigen-coordinates.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> eig =
      grid.points * spec.V.transpose();
  KernelMatrix K;
  K.values.resize(N, N);
  K.t0 = t0;
  K.t1 = t1;
  K.spec = spec;
  K.grid = grid;
  constexpr double floor_value = std::numeric_limits<double>::min();
  parallel_for(0, N, [&](std::ptrdiff_t j) {
    const double* zj = eig.row(j).data();
    for (Eigen::Index i = 0; i <= j; ++i) {
      K.values(i, j) = std::max(floor_value, std::exp(coeffs.log_eval(eig.row(i).data(), zj)));
    }
  });
  K.values.triangularView<Eigen::StrictlyLower>() = K.values.transpose();
  return K;
}

/// g(x) = ∫ κ(t0, y, t1, x) f(y) dy on the nodes.
inline Eigen::VectorXd apply_forward(const KernelMatrix& K, const Eigen::VectorXd& f) {
  require(f.size() == K.values.rows(), ErrorCode::DimensionMismatch,
          "vector length does not match the kernel matrix");
  return K.values.transpose() * f.cwiseProduct(K.grid.weights);
}

/// g(x) = ∫ κ(t0, x, t1, y) f(y) dy on the nodes.
inline Eigen::VectorXd apply_backward(const KernelMatrix& K, const Eigen::VectorXd& f) {
  require(f.size() == K.values.rows(), ErrorCode::DimensionMismatch,
          "vector length does not match the kernel matrix");
  return K.values * f.cwiseProduct(K.grid.weights);
}

// ---------------------------------------------------------------------------
// Differentiation and interpolation of node fields

/// Gradient of a node field: central differences in the interior, one-sided
/// at the boundary. Returns size() x dim.
inline Eigen::MatrixXd node_gradient(const GridSpec& grid, const Eigen::VectorXd& f) {
  require(f.size() == grid.size(), ErrorCode::DimensionMismatch,
          "field length does not match the grid");
  Eigen::MatrixXd grad(grid.size(), grid.dim);
  const int c0 = grid.counts[0];
  const int c1 = grid.dim == 2 ? grid.counts[1] : 1;
  for (int i = 0; i < c0; ++i) {
    for (int j = 0; j < c1; ++j) {
      const Eigen::Index idx = grid.flat_index(i, j);
      for (int k = 0; k < grid.dim; ++k) {
        const int pos = k == 0 ? i : j;
        const int count = grid.counts[k];
        const auto at = [&](int p) {
          return f(k == 0 ? grid.flat_index(p, j) : grid.flat_index(i, p));
        };
        const double h = grid.spacing[k];
        if (pos == 0) {
          grad(idx, k) = (at(1) - at(0)) / h;
        } else if (pos == count - 1) {
          grad(idx, k) = (at(count - 1) - at(count - 2)) / h;
        } else {
          grad(idx, k) = (at(pos + 1) - at(pos - 1)) / (2.0 * h);
        }
      }
    }
  }
  return grad;
}

/// (Bi)linear interpolation of each column of a node field at x; x is clamped
/// to the grid box.
inline Eigen::VectorXd interpolate(const GridSpec& grid, const Eigen::MatrixXd& field,
                                   const Eigen::VectorXd& x) {
  require(field.rows() == grid.size() && x.size() == grid.dim, ErrorCode::DimensionMismatch,
          "field or query does not match the grid");
  int base[2] = {0, 0};
  double frac[2] = {0.0, 0.0};
  for (int k = 0; k < grid.dim; ++k) {
    const double u = (std::clamp(x(k), grid.lower[k], grid.upper[k]) - grid.lower[k]) /
                     grid.spacing[k];
    base[k] = std::clamp(static_cast<int>(std::floor(u)), 0, grid.counts[k] - 2);
    frac[k] = u - base[k];
  }
  if (grid.dim == 1) {
    return ((1.0 - frac[0]) * field.row(base[0]) + frac[0] * field.row(base[0] + 1))
        .transpose();
  }
  const auto row = [&](int i, int j) { return field.row(grid.flat_index(i, j)); };
  const int i = base[0];
  const int j = base[1];
  return ((1 - frac[0]) * (1 - frac[1]) * row(i, j) + frac[0] * (1 - frac[1]) * row(i + 1, j) +
          (1 - frac[0]) * frac[1] * row(i, j + 1) + frac[0] * frac[1] * row(i + 1, j + 1))
      .transpose();
}

}  // namespace qsb
