#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsb/bridge.hpp"
#include "qsb/errors.hpp"
#include "qsb/grid.hpp"
#include "qsb/parallel.hpp"

namespace qsb {

inline constexpr const char* kRngDescription =
    "std::mt19937_64 per path, seeded by std::seed_seq{seed_lo32, seed_hi32, path_id}; "
    "standard normals by Box-Muller on 53-bit uniforms";

/// One independent stream per path, so ensembles do not depend on how paths
/// are scheduled across threads.
class PathRng {
 public:
  PathRng(std::uint64_t seed, std::uint64_t path_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path_id & 0xffffffffu),
                      static_cast<std::uint32_t>(path_id >> 32)};
    engine_.seed(seq);
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Draws from an endpoint density: exact for Gaussian and mixtures, inverse
/// CDF on the working grid for tables (piecewise-linear in 1D; node mass plus
/// uniform jitter within the cell in 2D).
class DensitySampler {
 public:
  DensitySampler(const DensitySpec& rho, const GridSpec& grid) : rho_(rho), grid_(grid) {
    validate_density(rho_);
    if (std::holds_alternative<Gaussian>(rho_)) {
      add_component(std::get<Gaussian>(rho_), 1.0);
    } else if (std::holds_alternative<GaussianMixture>(rho_)) {
      const auto& mix = std::get<GaussianMixture>(rho_);
      for (std::size_t k = 0; k < mix.components.size(); ++k) {
        add_component(mix.components[k], mix.weights[k]);
      }
    } else {
      const Eigen::VectorXd v = discretize(rho_, grid_);
      const Eigen::VectorXd mass = v.cwiseProduct(grid_.weights);
      if (grid_.dim == 1) {
        // Cumulative trapezoid between consecutive nodes.
        cdf_.assign(static_cast<std::size_t>(grid_.size()), 0.0);
        for (Eigen::Index i = 1; i < grid_.size(); ++i) {
          cdf_[static_cast<std::size_t>(i)] =
              cdf_[static_cast<std::size_t>(i - 1)] + 0.5 * grid_.spacing[0] * (v(i - 1) + v(i));
        }
      } else {
        cdf_.resize(static_cast<std::size_t>(grid_.size()));
        double acc = 0.0;
        for (Eigen::Index i = 0; i < grid_.size(); ++i) {
          acc += mass(i);
          cdf_[static_cast<std::size_t>(i)] = acc;
        }
      }
      const double total = cdf_.back();
      for (double& c : cdf_) c /= total;
    }
  }

  Eigen::VectorXd sample(PathRng& rng) const {
    if (!chol_.empty()) {
      std::size_t k = 0;
      const double u = rng.uniform() * total_weight_;
      double acc = 0.0;
      for (; k + 1 < weights_.size(); ++k) {
        acc += weights_[k];
        if (u < acc) break;
      }
      Eigen::VectorXd xi(grid_.dim);
      for (int i = 0; i < grid_.dim; ++i) xi(i) = rng.normal();
      return means_[k] + chol_[k] * xi;
    }
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto idx = static_cast<Eigen::Index>(
        std::clamp<std::ptrdiff_t>(it - cdf_.begin(), 1, static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
    Eigen::VectorXd x(grid_.dim);
    if (grid_.dim == 1) {
      const double c0 = cdf_[static_cast<std::size_t>(idx - 1)];
      const double c1 = cdf_[static_cast<std::size_t>(idx)];
      const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
      x(0) = grid_.points(idx - 1, 0) + frac * grid_.spacing[0];
      return x;
    }
    const Eigen::Index node = u < cdf_.front() ? 0 : idx;
    for (int k = 0; k < 2; ++k) {
      const double h = grid_.spacing[k];
      x(k) = std::clamp(grid_.points(node, k) + (rng.uniform() - 0.5) * h, grid_.lower[k],
                        grid_.upper[k]);
    }
    return x;
  }

 private:
  void add_component(const Gaussian& g, double weight) {
    const Eigen::LLT<Eigen::MatrixXd> llt(g.covariance);
    require(llt.info() == Eigen::Success, ErrorCode::InvalidArgument,
            "covariance must be positive definite");
    means_.push_back(g.mean);
    chol_.push_back(llt.matrixL());
    weights_.push_back(weight);
    total_weight_ += weight;
  }

  DensitySpec rho_;
  GridSpec grid_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> chol_;
  std::vector<double> weights_;
  double total_weight_ = 0.0;
  std::vector<double> cdf_;
};

struct SimulationOptions {
  /// Keep every k-th time step in PathEnsemble::paths (t0 and t1 always kept).
  int record_stride = 1;
};

struct PathEnsemble {
  int n_paths = 0;
  int dim = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> times;        // recorded times
  std::vector<double> paths;        // [path][recorded step][dim], flattened
  Eigen::MatrixXd terminal_samples; // n_paths x dim
  std::vector<int> clamp_counts;    // per path
  double time_avg_second_moment = 0.0;
  std::string rng = kRngDescription;

  double at(int path, std::size_t step, int k) const {
    return paths[(static_cast<std::size_t>(path) * times.size() + step) *
                     static_cast<std::size_t>(dim) +
                 static_cast<std::size_t>(k)];
  }
};

/// Euler–Maruyama for dx = u_opt(t, x) dt + √2 dw started from ρ₀ samples.
/// The last step is shortened so that the final time is exactly t1. Paths
/// leaving the grid box are clamped back and counted; drift queries are
/// clamped one spacing inside the box.
inline PathEnsemble simulate_paths(const BridgeSolution& sol, const DensitySpec& rho0,
                                   int n_paths, double dt, std::uint64_t seed,
                                   const SimulationOptions& opts = {}) {
  const double horizon = sol.t1() - sol.t0();
  require(n_paths >= 1, ErrorCode::InvalidArgument, "n_paths must be >= 1");
  require(dt > 0.0 && dt <= horizon / 50.0 * (1.0 + 1e-12), ErrorCode::InvalidArgument,
          "dt must lie in (0, (t1 - t0)/50]");
  require(opts.record_stride >= 1, ErrorCode::InvalidArgument, "record_stride must be >= 1");
  const GridSpec& grid = sol.grid();
  const int dim = grid.dim;
  require(density_dim(rho0) == dim, ErrorCode::DimensionMismatch,
          "rho0 dimension does not match the grid");

  const int n_steps = static_cast<int>(std::ceil(horizon / dt - 1e-9));
  std::vector<double> step_times(static_cast<std::size_t>(n_steps) + 1);
  for (int k = 0; k < n_steps; ++k) step_times[static_cast<std::size_t>(k)] = sol.t0() + k * dt;
  step_times.back() = sol.t1();

  std::vector<int> recorded;
  for (int k = 0; k <= n_steps; k += opts.record_stride) recorded.push_back(k);
  if (recorded.back() != n_steps) recorded.push_back(n_steps);

  PathEnsemble ens;
  ens.n_paths = n_paths;
  ens.dim = dim;
  ens.dt = dt;
  ens.seed = seed;
  for (int k : recorded) ens.times.push_back(step_times[static_cast<std::size_t>(k)]);
  ens.paths.assign(static_cast<std::size_t>(n_paths) * ens.times.size() * dim, 0.0);
  ens.clamp_counts.assign(static_cast<std::size_t>(n_paths), 0);

  const DensitySampler sampler(rho0, grid);
  std::vector<PathRng> rngs;
  rngs.reserve(static_cast<std::size_t>(n_paths));
  Eigen::MatrixXd state(n_paths, dim);
  for (int p = 0; p < n_paths; ++p) {
    rngs.emplace_back(seed, static_cast<std::uint64_t>(p));
    state.row(p) = sampler.sample(rngs.back()).transpose();
  }

  const auto record = [&](std::size_t slot) {
    for (int p = 0; p < n_paths; ++p) {
      for (int k = 0; k < dim; ++k) {
        ens.paths[(static_cast<std::size_t>(p) * ens.times.size() + slot) * dim + k] =
            state(p, k);
      }
    }
  };
  std::size_t next_slot = 0;
  record(next_slot++);
  double second_moment_sum = state.rowwise().squaredNorm().mean();

  for (int k = 0; k < n_steps; ++k) {
    const double t = step_times[static_cast<std::size_t>(k)];
    const double h = step_times[static_cast<std::size_t>(k) + 1] - t;
    const double noise = std::sqrt(2.0 * h);
    const ControlField field = sol.control_field(t);
    parallel_for(0, n_paths, [&](std::ptrdiff_t p) {
      Eigen::VectorXd x = state.row(p).transpose();
      Eigen::VectorXd query = x;
      for (int c = 0; c < dim; ++c) {
        query(c) = std::clamp(x(c), grid.lower[c] + grid.spacing[c],
                              grid.upper[c] - grid.spacing[c]);
      }
      const Eigen::VectorXd drift = interpolate(grid, field.grad, query);
      PathRng& rng = rngs[static_cast<std::size_t>(p)];
      bool clamped = false;
      for (int c = 0; c < dim; ++c) {
        double next = x(c) + drift(c) * h + noise * rng.normal();
        if (next < grid.lower[c] || next > grid.upper[c]) {
          next = std::clamp(next, grid.lower[c], grid.upper[c]);
          clamped = true;
        }
        state(p, c) = next;
      }
      if (clamped) ++ens.clamp_counts[static_cast<std::size_t>(p)];
    });
    second_moment_sum += state.rowwise().squaredNorm().mean();
    if (next_slot < recorded.size() && recorded[next_slot] == k + 1) record(next_slot++);
  }
  ens.time_avg_second_moment = second_moment_sum / (n_steps + 1);
  ens.terminal_samples = state;
  return ens;
}

/// Marginal CDF of ρ along coordinate k.
inline double marginal_cdf(const DensitySpec& rho, int k, double x) {
  const auto gauss_cdf = [&](const Gaussian& g) {
    const double sd = std::sqrt(g.covariance(k, k));
    return 0.5 * std::erfc(-(x - g.mean(k)) / (sd * std::numbers::sqrt2));
  };
  if (const auto* g = std::get_if<Gaussian>(&rho)) return gauss_cdf(*g);
  if (const auto* mix = std::get_if<GaussianMixture>(&rho)) {
    double acc = 0.0, total = 0.0;
    for (std::size_t c = 0; c < mix->components.size(); ++c) {
      acc += mix->weights[c] * gauss_cdf(mix->components[c]);
      total += mix->weights[c];
    }
    return acc / total;
  }
  const auto& tab = std::get<Tabulated>(rho);
  const std::size_t dim = tab.lower.size();
  const int ck = tab.counts[static_cast<std::size_t>(k)];
  const double hk = (tab.upper[k] - tab.lower[k]) / (ck - 1);
  std::vector<double> marginal(static_cast<std::size_t>(ck), 0.0);
  if (dim == 1) {
    for (int i = 0; i < ck; ++i) marginal[i] = std::max(0.0, tab.values[i]);
  } else {
    const int other = 1 - k;
    const int co = tab.counts[static_cast<std::size_t>(other)];
    const double ho = (tab.upper[other] - tab.lower[other]) / (co - 1);
    for (int i = 0; i < ck; ++i) {
      for (int j = 0; j < co; ++j) {
        const std::size_t idx = k == 0 ? static_cast<std::size_t>(i) * co + j
                                       : static_cast<std::size_t>(j) * ck + i;
        const double w = (j == 0 || j == co - 1) ? 0.5 * ho : ho;
        marginal[static_cast<std::size_t>(i)] += w * std::max(0.0, tab.values[idx]);
      }
    }
  }
  std::vector<double> cdf(static_cast<std::size_t>(ck), 0.0);
  for (int i = 1; i < ck; ++i) cdf[i] = cdf[i - 1] + 0.5 * hk * (marginal[i - 1] + marginal[i]);
  const double total = cdf.back();
  if (x <= tab.lower[k]) return 0.0;
  if (x >= tab.upper[k]) return 1.0;
  const double u = (x - tab.lower[k]) / hk;
  const int i = std::clamp(static_cast<int>(std::floor(u)), 0, ck - 2);
  const double frac = u - i;
  return ((1.0 - frac) * cdf[i] + frac * cdf[i + 1]) / total;
}

/// Two-sided Kolmogorov–Smirnov statistic of samples against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
  require(!samples.empty(), ErrorCode::InvalidArgument, "no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

struct EndpointReport {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::vector<double> ks;  // one per coordinate
  int clamped_paths = 0;
};

inline EndpointReport endpoint_stats(const Eigen::MatrixXd& terminal, const DensitySpec& rho1) {
  require(terminal.rows() >= 2, ErrorCode::InvalidArgument, "need at least two samples");
  require(terminal.cols() == density_dim(rho1), ErrorCode::DimensionMismatch,
          "sample dimension does not match rho1");
  EndpointReport r;
  r.mean = terminal.colwise().mean().transpose();
  const Eigen::MatrixXd centered = terminal.rowwise() - r.mean.transpose();
  r.covariance = centered.transpose() * centered / static_cast<double>(terminal.rows() - 1);
  for (int k = 0; k < terminal.cols(); ++k) {
    std::vector<double> col(terminal.col(k).data(), terminal.col(k).data() + terminal.rows());
    r.ks.push_back(ks_statistic(std::move(col), [&](double x) { return marginal_cdf(rho1, k, x); }));
  }
  return r;
}

inline EndpointReport endpoint_stats(const PathEnsemble& ens, const DensitySpec& rho1) {
  EndpointReport r = endpoint_stats(ens.terminal_samples, rho1);
  r.clamped_paths = static_cast<int>(
      std::count_if(ens.clamp_counts.begin(), ens.clamp_counts.end(), [](int c) { return c > 0; }));
  return r;
}

}  // namespace qsb
