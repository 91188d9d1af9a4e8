#include "qsb/sde.hpp"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace qsb {
namespace {

using qsb::testing::gauss1;

GTEST_TEST(PathRng, StreamsAreReproducibleAndDistinct) {
  PathRng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  for (int k = 0; k < 100; ++k) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    EXPECT_NE(x, c.normal());
    EXPECT_NE(x, d.normal());
  }
}

GTEST_TEST(PathRng, NormalMoments) {
  PathRng rng(1, 0);
  const int n = 200000;
  double s1 = 0, s2 = 0, s4 = 0;
  for (int k = 0; k < n; ++k) {
    const double x = rng.normal();
    s1 += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
  EXPECT_NEAR(s4 / n, 3.0, 0.06);
  for (int k = 0; k < 1000; ++k) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

GTEST_TEST(KolmogorovSmirnov, ExactSmallCases) {
  const auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
  EXPECT_DOUBLE_EQ(ks_statistic({0.5}, uniform), 0.5);
  EXPECT_DOUBLE_EQ(ks_statistic({0.25, 0.75}, uniform), 0.25);
  EXPECT_DOUBLE_EQ(ks_statistic({0.9, 0.95}, uniform), 0.9);
}

GTEST_TEST(KolmogorovSmirnov, NullSamplesStayBelowCriticalValue) {
  // 1.63/√n is the 1% critical value.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PathRng rng(seed, 0);
    std::vector<double> xs(2000);
    for (double& x : xs) x = 0.5 * rng.normal();
    EXPECT_LT(ks_statistic(xs, [](double x) { return marginal_cdf(gauss1(0, 0.5), 0, x); }), 1.63 / std::sqrt(2000.0));
  }
}

GTEST_TEST(MarginalCdf, GaussianMixtureAndTable) {
  EXPECT_NEAR(marginal_cdf(gauss1(1, 2), 0, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(marginal_cdf(gauss1(0, 1), 0, 1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(marginal_cdf(qsb::testing::fig5_rho0(), 0, 0.0), 0.5, 1e-15);
  const Tabulated tab{{0.0}, {1.0}, {3}, {1.0, 1.0, 1.0}};
  EXPECT_NEAR(marginal_cdf(tab, 0, 0.3), 0.3, 1e-15);
  EXPECT_EQ(marginal_cdf(tab, 0, -1.0), 0.0);
  EXPECT_EQ(marginal_cdf(tab, 0, 2.0), 1.0);
  const Tabulated tab2{{0.0, 0.0}, {1.0, 2.0}, {2, 2}, {1.0, 1.0, 1.0, 1.0}};
  EXPECT_NEAR(marginal_cdf(tab2, 1, 0.5), 0.25, 1e-15);
}

GTEST_TEST(DensitySampler, MixtureMoments) {
  const GridSpec g = qsb::testing::fig5_grid();
  const DensitySampler s(qsb::testing::fig5_rho0(), g);
  PathRng rng(3, 0);
  double s1 = 0, s2 = 0;
  int positive = 0;
  const int n = 40000;
  for (int k = 0; k < n; ++k) {
    const double x = s.sample(rng)(0);
    s1 += x;
    s2 += x * x;
    positive += x > 0;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0025, 0.01);
  EXPECT_NEAR(static_cast<double>(positive) / n, 0.5, 0.01);
}

GTEST_TEST(DensitySampler, TabulatedMatchesTableMoments) {
  std::vector<double> v;
  for (int i = 0; i < 101; ++i) v.push_back(1.0 + static_cast<double>(i) / 100);  // linear ramp on [0, 1]
  const Tabulated tab{{0.0}, {1.0}, {101}, v};
  const GridSpec g = build_grid({-0.5}, {1.5}, {201});
  const DensitySampler s(tab, g);
  PathRng rng(4, 0);
  std::vector<double> xs(20000);
  for (double& x : xs) x = s.sample(rng)(0);
  // Density (1 + x) / 1.5: CDF (x + x²/2) / 1.5.
  EXPECT_LT(ks_statistic(xs, [](double x) { x = std::clamp(x, 0.0, 1.0); return (x + 0.5 * x * x) / 1.5; }),
            1.63 / std::sqrt(20000.0));
}

GTEST_TEST(DensitySampler, Tabulated2DStaysInSupport) {
  const Tabulated tab{{0.0, 0.0}, {1.0, 1.0}, {3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0}};
  const GridSpec g = build_grid({-1.0, -1.0}, {2.0, 2.0}, {31, 31});
  const DensitySampler s(tab, g);
  PathRng rng(5, 0);
  double mx = 0, my = 0;
  for (int k = 0; k < 5000; ++k) {
    const Eigen::VectorXd x = s.sample(rng);
    EXPECT_GT(x(0), 0.0 - 0.11);
    EXPECT_LT(x(0), 1.0 + 0.11);
    mx += x(0);
    my += x(1);
  }
  EXPECT_NEAR(mx / 5000, 0.5, 0.02);
  EXPECT_NEAR(my / 5000, 0.5, 0.02);
}

class Simulation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fig5_ = new BridgeSolution(qsb::testing::fig5_solution(2.0));
  }
  static void TearDownTestSuite() { delete fig5_; }
  static BridgeSolution* fig5_;
};
BridgeSolution* Simulation::fig5_ = nullptr;

TEST_F(Simulation, SeedDeterminism) {
  const PathEnsemble a = simulate_paths(*fig5_, qsb::testing::fig5_rho0(), 50, 0.01, 9);
  const PathEnsemble b = simulate_paths(*fig5_, qsb::testing::fig5_rho0(), 50, 0.01, 9);
  const PathEnsemble c = simulate_paths(*fig5_, qsb::testing::fig5_rho0(), 50, 0.01, 10);
  EXPECT_EQ(a.paths, b.paths);
  EXPECT_NE(a.paths, c.paths);
  // Path p's stream does not depend on how many paths run alongside it.
  const PathEnsemble d = simulate_paths(*fig5_, qsb::testing::fig5_rho0(), 10, 0.01, 9);
  for (std::size_t s = 0; s < d.times.size(); ++s) EXPECT_EQ(d.at(3, s, 0), a.at(3, s, 0));
}

TEST_F(Simulation, TimeGridAndRecording) {
  SimulationOptions opts;
  opts.record_stride = 7;
  const PathEnsemble e = simulate_paths(*fig5_, qsb::testing::fig5_rho0(), 5, 0.02, 1, opts);
  EXPECT_EQ(e.times.front(), 0.0);
  EXPECT_EQ(e.times.back(), 1.0);
  EXPECT_EQ(e.times.size(), 9u);  // 0, 7, ..., 49 and 50
  EXPECT_NEAR(e.times[1], 0.14, 1e-15);
  EXPECT_EQ(e.paths.size(), 5u * 9u);
  for (int p = 0; p < 5; ++p) EXPECT_EQ(e.at(p, 8, 0), e.terminal_samples(p, 0));
  try {
    simulate_paths(*fig5_, qsb::testing::fig5_rho0(), 5, 0.05, 1);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::InvalidArgument);
  }
}

TEST_F(Simulation, Fig5TerminalLaw) {
  const PathEnsemble e = simulate_paths(*fig5_, qsb::testing::fig5_rho0(), 2000, 1e-3, 1);
  const EndpointReport r = endpoint_stats(e, qsb::testing::fig5_rho1());
  EXPECT_NEAR(r.mean(0), 0.0, 0.05);
  EXPECT_NEAR(std::sqrt(r.covariance(0, 0)), 0.5, 0.075);
  EXPECT_LT(r.ks[0], 0.05);
  EXPECT_EQ(r.clamped_paths, 0);
  // Scored against the wrong target the statistic is far larger.
  const EndpointReport wrong = endpoint_stats(e, gauss1(0, 1));
  EXPECT_GT(wrong.ks[0], 3 * r.ks[0]);
  EXPECT_GT(wrong.ks[0], 0.1);
}

GTEST_TEST(GaussianSelfBridge, EnsembleMomentsFollowClosedForm) {
  // N(0,1) → N(0,1) under dx = √2 dw: Var_t = (1−t)² + t² + t(1−t)√8.
  const BridgeSolution sol = qsb::testing::solve_1d(0.0, gauss1(0, 1), gauss1(0, 1), qsb::testing::fig5_grid());
  SimulationOptions opts;
  opts.record_stride = 10;
  const PathEnsemble e = simulate_paths(sol, gauss1(0, 1), 5000, 5e-3, 2, opts);
  for (std::size_t s : {std::size_t{10}, std::size_t{20}}) {
    const double t = e.times[s];
    double m = 0, v = 0;
    for (int p = 0; p < e.n_paths; ++p) m += e.at(p, s, 0);
    m /= e.n_paths;
    for (int p = 0; p < e.n_paths; ++p) v += (e.at(p, s, 0) - m) * (e.at(p, s, 0) - m);
    v /= e.n_paths - 1;
    const double expected = (1 - t) * (1 - t) + t * t + t * (1 - t) * std::sqrt(8.0);
    EXPECT_NEAR(m, 0.0, 0.06) << t;
    EXPECT_NEAR(v / expected, 1.0, 0.08) << t;
  }
  const EndpointReport r = endpoint_stats(e, gauss1(0, 1));
  EXPECT_NEAR(r.covariance(0, 0), 1.0, 0.08);
  EXPECT_LT(r.ks[0], 1.63 / std::sqrt(5000.0));
}

GTEST_TEST(Regularization, StateCostShrinksSecondMoment) {
  const DensitySpec rho0 = qsb::testing::fig5_rho0(), rho1 = qsb::testing::fig5_rho1();
  const BridgeSolution free = qsb::testing::fig5_solution(0.0);
  const BridgeSolution reg = qsb::testing::fig5_solution(2.0);
  const PathEnsemble a = simulate_paths(free, rho0, 500, 0.01, 3);
  const PathEnsemble b = simulate_paths(reg, rho0, 500, 0.01, 3);
  EXPECT_LT(b.time_avg_second_moment, a.time_avg_second_moment);
  // Oracle for the ensemble average: mean of E|x|² from ρ_opt on the same steps.
  double integral = 0.0;
  const GridSpec& g = reg.grid();
  const Eigen::VectorXd x2 = g.points.col(0).cwiseAbs2();
  for (int k = 0; k <= 100; ++k) {
    const Eigen::VectorXd rho = reg.rho_opt(std::min(1.0, 0.01 * k));
    integral += g.weights.dot(rho.cwiseProduct(x2)) / g.weights.dot(rho);
  }
  EXPECT_NEAR(b.time_avg_second_moment, integral / 101, 0.05);
}

}  // namespace
}  // namespace qsb
