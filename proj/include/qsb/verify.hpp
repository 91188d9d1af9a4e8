#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsb/analytic.hpp"
#include "qsb/bridge.hpp"
#include "qsb/grid.hpp"
#include "qsb/hermite.hpp"
#include "qsb/kernels.hpp"
#include "qsb/sinkhorn.hpp"
#include "qsb/spectral.hpp"

namespace qsb {

struct VerifyOptions {
  int random_points = 50;
  int sweep = 200;
  std::uint64_t seed = 7;
  /// Relative error injected into every κ++ evaluation made by the kernel
  /// checks; nonzero values must make exactly those checks fail.
  double kernel_perturbation = 0.0;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      // measured statistic
  double threshold = 0.0;  // bound it was compared with
  std::string detail;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
};

namespace verify_detail {

struct Context {
  const VerifyOptions& opts;
  std::mt19937_64 rng;

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }

  double kpp(double t0, double y, double t, double z, double d) const {
    Eigen::VectorXd yy(1), zz(1), dd(1);
    yy << y;
    zz << z;
    dd << d;
    return kernel_pp(t0, yy, t, zz, dd).value * (1.0 + opts.kernel_perturbation);
  }
};

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline CheckResult eigen_roundtrip(Context& c) {
  double worst = 0.0;
  for (int k = 0; k < c.opts.sweep; ++k) {
    const int n = 1 + static_cast<int>(c.rng() % 4);
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = c.uniform(-1.0, 1.0);
    const Eigen::MatrixXd Q = A * A.transpose();
    const SpectralQ s = eigendecompose_q(Q);
    const double recon =
        (s.V.transpose() * s.d.asDiagonal() * s.V - 0.5 * Q).cwiseAbs().maxCoeff();
    const double orth =
        (s.V * s.V.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    worst = std::max({worst, recon, orth});
  }
  return {"spectral.roundtrip", worst < 1e-10, worst, 1e-10, "max |Vᵀdiag(d)V − Q/2|, |VVᵀ − I|"};
}

inline CheckResult matrix_m_sweep(Context& c) {
  double det_err = 0.0, sym = 0.0, min_eig = INFINITY;
  for (int k = 0; k < c.opts.sweep; ++k) {
    const int m = 1 + static_cast<int>(c.rng() % 4);
    Eigen::VectorXd d(m);
    for (int i = 0; i < m; ++i) d(i) = c.uniform(1e-6, 1e2);
    const MatrixM M = build_matrix_m(d, c.uniform(1e-3, 10.0));
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M.blocks)
                                    .eigenvalues()
                                    .minCoeff());
    det_err = std::max(det_err, rel(M.blocks.partialPivLu().determinant(), d.prod()));
    sym = std::max(sym, symplectic_factor_check(M).residual);
  }
  const bool ok = min_eig > 0.0 && det_err < 1e-8 && sym < 1e-8;
  return {"spectral.matrix_m", ok, std::max(det_err, sym), 1e-8,
          "min eig " + std::to_string(min_eig) + ", det rel err, symplectic residual"};
}

inline CheckResult hermite_orthogonality(Context&) {
  double worst = 0.0;
  for (int m = 0; m <= 8; ++m) {
    for (int n = 0; n <= 8; ++n) {
      const double scale = m == n ? std::sqrt(std::numbers::pi) * std::ldexp(std::tgamma(n + 1.0), n)
                                  : 1.0;
      worst = std::max(worst, orthogonality_residual(m, n, 4001) / scale);
    }
  }
  return {"hermite.orthogonality", worst < 1e-10, worst, 1e-10, "degrees 0..8, relative"};
}

inline CheckResult kernel_series(Context& c) {
  double worst = 0.0;
  for (double d : {0.25, 1.0, 4.0}) {
    for (double tau : {0.5, 1.0}) {
      for (int k = 0; k < c.opts.random_points; ++k) {
        const double y = c.uniform(-2.0, 2.0), z = c.uniform(-2.0, 2.0);
        Eigen::VectorXd yy(1), zz(1), dd(1);
        yy << y;
        zz << z;
        dd << d;
        worst = std::max(worst, std::abs(c.kpp(0.0, y, tau, z, d) -
                                         kernel_series_oracle(0.0, tau, yy, zz, dd, 80)));
      }
    }
  }
  return {"kernel.series_oracle", worst < 1e-8, worst, 1e-8, "|κ++ − 80-term Hermite series|"};
}

inline CheckResult kernel_heat_limit(Context& c) {
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
  for (auto [y, z] : {std::pair{0.0, 0.0}, {1.0, -1.0}, {-2.0, 2.0}, {0.5, 1.5}, {-1.2, -0.3}}) {
    pairs.emplace_back(Eigen::VectorXd::Constant(1, y), Eigen::VectorXd::Constant(1, z));
  }
  const auto err = [&](double ds) {
    double worst = 0.0;
    for (const auto& [y, z] : pairs) {
      const double heat = heat_kernel(0.0, y, 1.0, z).value;
      worst = std::max(worst, rel(c.kpp(0.0, y(0), 1.0, z(0), ds), heat));
    }
    return worst;
  };
  const double e4 = err(1e-4), e6 = err(1e-6), e8 = err(1e-8);
  const double exact = heat_limit_check(0.0, pairs, 1.0);
  const bool ok = e8 < 1e-4 && e4 > e6 && e6 > e8 && exact == 0.0;
  return {"kernel.heat_limit", ok, e8, 1e-4,
          "errors at d=1e-4,1e-6,1e-8: " + std::to_string(e4) + ", " + std::to_string(e6) + ", " +
              std::to_string(e8)};
}

inline CheckResult kernel_mehler(Context& c) {
  double worst = 0.0;
  for (int k = 0; k < 2 * c.opts.random_points; ++k) {
    const double y = c.uniform(-3.0, 3.0), z = c.uniform(-3.0, 3.0);
    const double t0 = c.uniform(0.0, 1.0), t = t0 + c.uniform(0.05, 2.0);
    worst = std::max(worst, rel(c.kpp(t0, y, t, z, 1.0),
                                mehler_kernel(t0, Eigen::VectorXd::Constant(1, y), t,
                                              Eigen::VectorXd::Constant(1, z))
                                    .value));
  }
  return {"kernel.mehler", worst < 1e-12, worst, 1e-12, "κ++(d=1) vs Mehler, relative"};
}

inline CheckResult kernel_symmetry_positivity(Context& c) {
  double worst = 0.0;
  bool positive = true;
  for (int k = 0; k < c.opts.random_points; ++k) {
    Eigen::MatrixXd B(2, 1);
    B << c.uniform(-1.0, 1.0), c.uniform(-1.0, 1.0);
    const SpectralQ spec = eigendecompose_q(B * B.transpose() * 4.0);
    Eigen::VectorXd x(2), x2(2);
    x << c.uniform(-3, 3), c.uniform(-3, 3);
    x2 << c.uniform(-3, 3), c.uniform(-3, 3);
    const double tau = c.uniform(0.1, 2.0);
    const KernelEval a = kernel_q(0.0, x, tau, x2, spec), b = kernel_q(0.0, x2, tau, x, spec);
    positive = positive && a.value > 0.0 && std::isfinite(a.log_value);
    worst = std::max(worst, std::abs(a.log_value - b.log_value));
  }
  return {"kernel.symmetry_positivity", positive && worst < 1e-12, worst, 1e-12,
          "κ+(x, x') = κ+(x', x) and κ+ > 0 for rank-1 Q"};
}

inline CheckResult kernel_mass(Context& c, int nodes) {
  const double L = 12.0, h = 2 * L / (nodes - 1);
  std::vector<double> xs(static_cast<std::size_t>(nodes)), ws(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    xs[i] = -L + i * h;
    ws[i] = (i == 0 || i == nodes - 1) ? 0.5 * h : h;
  }
  double total = 0.0;
  for (int i = 0; i < nodes; ++i)
    for (int j = 0; j < nodes; ++j) total += ws[i] * ws[j] * c.kpp(0.0, xs[i], 1.0, xs[j], 1.0);
  const double exact = qsb::kernel_mass(0.0, 1.0, Eigen::VectorXd::Ones(1)).value;
  const double err = rel(total, exact);
  return {"kernel.mass", err < 1e-6, err, 1e-6, "trapezoid on [−12,12]² vs (√d sinh 2τ√d)^{-1/2}"};
}

inline CheckResult kernel_semigroup(Context& c, int nodes) {
  const double L = 12.0, h = 2 * L / (nodes - 1);
  double worst = 0.0;
  for (auto [y, z] : {std::pair{0.3, -0.4}, {1.0, 1.5}, {-1.5, 0.2}, {0.0, 0.0}}) {
    double acc = 0.0;
    for (int i = 0; i < nodes; ++i) {
      const double w = -L + i * h;
      const double wt = (i == 0 || i == nodes - 1) ? 0.5 * h : h;
      acc += wt * c.kpp(0.0, y, 0.4, w, 1.0) * c.kpp(0.4, w, 1.0, z, 1.0);
    }
    worst = std::max(worst, rel(acc, c.kpp(0.0, y, 1.0, z, 1.0)));
  }
  return {"kernel.semigroup", worst < 1e-5, worst, 1e-5, "split 0.4 / 1.0, d=1"};
}

/// Max over probe points of |∂ₜκ − ∂²_zκ + d z² κ| by central differences.
inline double pde_residual(const Context& c, double h) {
  const double d = 1.0, y = 0.4;
  double worst = 0.0;
  for (double t : {0.5, 0.8}) {
    for (double z : {-1.0, 0.0, 0.7, 1.5}) {
      const double k = c.kpp(0.0, y, t, z, d);
      const double dt = (c.kpp(0.0, y, t + h, z, d) - c.kpp(0.0, y, t - h, z, d)) / (2 * h);
      const double dzz =
          (c.kpp(0.0, y, t, z + h, d) - 2 * k + c.kpp(0.0, y, t, z - h, d)) / (h * h);
      worst = std::max(worst, std::abs(dt - dzz + d * z * z * k));
    }
  }
  return worst;
}

inline CheckResult kernel_pde(Context& c) {
  const double r0 = pde_residual(c, 0.04), r1 = pde_residual(c, 0.02), r2 = pde_residual(c, 0.01);
  const double ratio = std::min(r0 / r1, r1 / r2);
  return {"kernel.pde_residual", ratio >= 3.5, ratio, 3.5,
          "residual reduction per mesh halving (forward PDE)"};
}

inline CheckResult action(Context& c) {
  double worst_discrete = 0.0, worst_matrix = 0.0;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd y(1), z(1), d(1);
    y << c.uniform(-2, 2);
    z << c.uniform(-2, 2);
    d << c.uniform(0.1, 4.0);
    const double tau = c.uniform(0.2, 2.0);
    const double closed = action_distance(y, z, tau, d);
    worst_discrete = std::max(worst_discrete, rel(discrete_action_min(y, z, tau, d, 400).value, closed));
    worst_matrix = std::max(worst_matrix, rel(build_matrix_m(d, tau).quadratic_form(y, z), closed));
  }
  const bool ok = worst_discrete < 1e-4 && worst_matrix < 1e-12;
  return {"analytic.action_distance", ok, worst_discrete, 1e-4,
          "vs discrete action (K=400); vs (y,z)ᵀM(y,z): " + std::to_string(worst_matrix)};
}

/// Grid propagation of f ≡ 1 and f = N(0, I) against the closed forms.
inline CheckResult analytic_grid(Context& c) {
  double worst = 0.0;
  struct Case {
    Eigen::MatrixXd Q;
    double L;
    int nodes;
    bool gaussian;
  };
  std::vector<Case> cases;
  cases.push_back({Eigen::MatrixXd::Constant(1, 1, 2.0), 10.0, 801, false});
  cases.push_back({Eigen::MatrixXd::Constant(1, 1, 2.0), 10.0, 801, true});
  cases.push_back({2.0 * Eigen::MatrixXd::Identity(2, 2), 8.0, 64, true});
  Eigen::MatrixXd semi = Eigen::MatrixXd::Zero(2, 2);
  semi(0, 0) = 2.0;
  cases.push_back({semi, 12.0, 64, false});  // heat tails need room at t = 1
  for (const Case& cs : cases) {
    const int dim = static_cast<int>(cs.Q.rows());
    const GridSpec g = build_grid(std::vector<double>(dim, -cs.L), std::vector<double>(dim, cs.L),
                                  std::vector<int>(dim, cs.nodes));
    const SpectralQ spec = eigendecompose_q(cs.Q);
    const double t = cs.gaussian ? 0.5 : 1.0;
    const KernelMatrix K = assemble_kernel_matrix(g, 0.0, t, spec);
    Eigen::VectorXd f(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      f(i) = cs.gaussian ? std::exp(-0.5 * g.node(i).squaredNorm()) / std::pow(2 * std::numbers::pi, 0.5 * dim)
                         : 1.0;
    }
    const Eigen::VectorXd out = apply_forward(K, f);
    int tested = 0;
    while (tested < 20) {
      const Eigen::Index i = static_cast<Eigen::Index>(c.rng() % static_cast<std::uint64_t>(g.size()));
      const Eigen::VectorXd x = g.node(i);
      if (x.cwiseAbs().maxCoeff() > 2.5) continue;
      const double exact = cs.gaussian ? phihat_gaussian(t, x, cs.Q, true) : phihat_unity(t, x, cs.Q, true);
      worst = std::max(worst, rel(out(i), exact));
      ++tested;
    }
  }
  return {"analytic.phihat_grid", worst < 1e-6, worst, 1e-6,
          "Q=2 (1D), 2I and diag(2,0) (2D), f≡1 and f=N(0,I)"};
}

inline CheckResult solution_properties(Context&) {
  // Prop. (ii)/(iii): positive, decaying in |x| and in t.
  Eigen::MatrixXd Q(2, 2);
  Q << 2.0, 0.5, 0.5, 1.0;
  bool ok = true;
  double prev_t = INFINITY;
  for (double t : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    double prev_x = INFINITY;
    for (double r : {0.0, 1.0, 2.0, 4.0, 8.0}) {
      Eigen::VectorXd x(2);
      x << r, -0.5 * r;
      const double v = phihat_gaussian(t, x, Q);
      ok = ok && v > 0.0 && v < prev_x;
      prev_x = v;
    }
    const double at0 = phihat_unity(t, Eigen::VectorXd::Zero(2), Q);
    ok = ok && at0 < prev_t;
    prev_t = at0;
  }
  return {"analytic.positivity_decay", ok, ok ? 0.0 : 1.0, 0.5,
          "φ̂ > 0, decreasing in |x| and t"};
}

inline CheckResult self_bridge(Context&) {
  const GridSpec g = build_grid({-6.0}, {6.0}, {241});
  const SpectralQ spec = eigendecompose_q(Eigen::MatrixXd::Zero(1, 1));
  const Gaussian rho{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 0.64)};
  const Eigen::VectorXd r = discretize(rho, g);
  const KernelMatrix K = assemble_kernel_matrix(g, 0.0, 0.2, spec);
  const SinkhornState s = sinkhorn_solve(r, r, K);
  const BridgeSolution sol(g, spec, 0.0, 0.2, s);
  const BridgeSolution other = sol.regauged(10.0);
  const double gauge =
      (sol.rho_opt(0.1) - other.rho_opt(0.1)).cwiseAbs().maxCoeff() / sol.rho_opt(0.1).maxCoeff();
  const double resid = std::max(s.residual0, s.residual1);
  const bool ok = s.converged && resid < 1e-8 && gauge < 1e-12;
  return {"sinkhorn.self_bridge", ok, resid, 1e-8,
          "Q=0 self-bridge residual; regauge (c=10) deviation " + std::to_string(gauge)};
}

}  // namespace verify_detail

/// The full property suite behind `qsb verify`.
inline VerifyReport run_property_suite(const VerifyOptions& opts = {}) {
  verify_detail::Context ctx{opts, std::mt19937_64(opts.seed)};
  using Fn = std::function<CheckResult(verify_detail::Context&)>;
  const std::vector<Fn> checks = {
      verify_detail::eigen_roundtrip,
      verify_detail::matrix_m_sweep,
      verify_detail::hermite_orthogonality,
      verify_detail::kernel_series,
      verify_detail::kernel_heat_limit,
      verify_detail::kernel_mehler,
      verify_detail::kernel_symmetry_positivity,
      [](verify_detail::Context& c) { return verify_detail::kernel_mass(c, 400); },
      [](verify_detail::Context& c) { return verify_detail::kernel_semigroup(c, 2000); },
      verify_detail::kernel_pde,
      verify_detail::action,
      verify_detail::analytic_grid,
      verify_detail::solution_properties,
      verify_detail::self_bridge,
  };
  VerifyReport report;
  for (const Fn& check : checks) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = check(ctx);
    } catch (const std::exception& e) {
      r.name = "exception";
      r.pass = false;
      r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.checks.push_back(std::move(r));
  }
  return report;
}

}  // namespace qsb
