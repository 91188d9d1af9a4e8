#include "qsb/grid.hpp"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "generators.hpp"

namespace qsb {
namespace {

template <typename F>
void expect_code(ErrorCode code, F&& f) {
  try {
    f();
    ADD_FAILURE() << "no error raised";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

GTEST_TEST(Grid, OneDimensionalNodesAndWeights) {
  const GridSpec g = build_grid({-1.0}, {1.0}, {21});
  ASSERT_EQ(g.size(), 21);
  EXPECT_DOUBLE_EQ(g.spacing[0], 0.1);
  EXPECT_EQ(g.points(0, 0), -1.0);
  EXPECT_EQ(g.points(20, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.weights(0), 0.05);
  EXPECT_DOUBLE_EQ(g.weights(10), 0.1);
  EXPECT_NEAR(g.weights.sum(), 2.0, 1e-14);
}

GTEST_TEST(Grid, TwoDimensionalIsRowMajor) {
  const GridSpec g = build_grid({0.0, -1.0}, {1.0, 1.0}, {16, 17});
  ASSERT_EQ(g.size(), 16 * 17);
  const Eigen::Index idx = g.flat_index(3, 5);
  EXPECT_EQ(idx, 3 * 17 + 5);
  EXPECT_NEAR(g.points(idx, 0), 3.0 / 15.0, 1e-15);
  EXPECT_NEAR(g.points(idx, 1), -1.0 + 5 * 2.0 / 16.0, 1e-15);
  EXPECT_NEAR(g.weights.sum(), 2.0, 1e-13);
  EXPECT_NEAR(g.cell_volume(), (1.0 / 15) * (2.0 / 16), 1e-15);
}

GTEST_TEST(Grid, RejectsBadShapes) {
  expect_code(ErrorCode::InvalidBounds, [] { build_grid({1.0}, {1.0}, {32}); });
  expect_code(ErrorCode::TooFewPoints, [] { build_grid({0.0}, {1.0}, {15}); });
  expect_code(ErrorCode::GridTooLarge, [] { build_grid({0.0, 0.0}, {1.0, 1.0}, {65, 64}); });
  expect_code(ErrorCode::InvalidArgument, [] { build_grid({0, 0, 0}, {1, 1, 1}, {16, 16, 16}); });
  expect_code(ErrorCode::DimensionMismatch, [] { build_grid({0.0}, {1.0, 2.0}, {16}); });
}

GTEST_TEST(Discretize, UnitMassUnderTrapezoid) {
  const GridSpec g = qsb::testing::fig5_grid();
  for (const DensitySpec& rho : {qsb::testing::fig5_rho0(), qsb::testing::fig5_rho1()}) {
    const Eigen::VectorXd v = discretize(rho, g);
    EXPECT_NEAR(g.weights.dot(v), 1.0, 1e-14);
    EXPECT_TRUE(tails_negligible(g, v));
  }
}

GTEST_TEST(Discretize, GaussianNodeValuesMatchPdf) {
  const GridSpec g = build_grid({-8.0}, {8.0}, {401});
  const Eigen::VectorXd v = discretize(qsb::testing::gauss1(0.5, 1.0), g);
  for (Eigen::Index i = 0; i < g.size(); i += 37) {
    const double x = g.points(i, 0);
    EXPECT_NEAR(v(i), std::exp(-0.5 * (x - 0.5) * (x - 0.5)) / std::sqrt(2 * std::numbers::pi), 1e-12);
  }
}

GTEST_TEST(Discretize, CorrelatedGaussianIn2D) {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.6, 0.6, 2.0;
  const Gaussian g{Eigen::Vector2d(0.3, -0.2), cov};
  const Eigen::Vector2d x(0.7, 0.4);
  const Eigen::Vector2d r = x - g.mean;
  const double expected = std::exp(-0.5 * r.dot(cov.inverse() * r)) / (2 * std::numbers::pi * std::sqrt(cov.determinant()));
  EXPECT_NEAR(gaussian_pdf(g, x), expected, 1e-15);
}

GTEST_TEST(Discretize, TabulatedInterpolatesAndVanishesOutside) {
  const Tabulated tab{{0.0}, {1.0}, {3}, {0.0, 2.0, 4.0}};
  EXPECT_DOUBLE_EQ(density_value(tab, Eigen::VectorXd::Constant(1, 0.25)), 1.0);
  EXPECT_DOUBLE_EQ(density_value(tab, Eigen::VectorXd::Constant(1, 1.5)), 0.0);
  const Tabulated tab2{{0.0, 0.0}, {1.0, 1.0}, {2, 2}, {0.0, 1.0, 2.0, 3.0}};
  EXPECT_DOUBLE_EQ(density_value(tab2, Eigen::Vector2d(0.5, 0.5)), 1.5);
  EXPECT_DOUBLE_EQ(density_value(tab2, Eigen::Vector2d(1.0, 0.0)), 2.0);
}

GTEST_TEST(Discretize, RejectsMalformedDensities) {
  const GridSpec g = build_grid({-1.0}, {1.0}, {32});
  expect_code(ErrorCode::DimensionMismatch, [&] { discretize(Tabulated{{0.0}, {1.0}, {4}, {1, 2}}, g); });
  expect_code(ErrorCode::InvalidArgument,
              [&] { discretize(GaussianMixture{{-1.0}, {qsb::testing::gauss1(0, 1)}}, g); });
  expect_code(ErrorCode::NonPositiveDensity, [&] { discretize(Tabulated{{5.0}, {6.0}, {2}, {1, 1}}, g); });
  expect_code(ErrorCode::DimensionMismatch,
              [&] { discretize(Gaussian{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()}, g); });
}

GTEST_TEST(Moments, MixtureAndTable) {
  const Moments m = density_moments(qsb::testing::fig5_rho0());
  EXPECT_NEAR(m.mean(0), 0.0, 1e-15);
  EXPECT_NEAR(m.covariance(0, 0), 1.0 + 0.0025, 1e-15);
  std::vector<double> values;
  for (int i = 0; i < 3201; ++i) {
    const double x = -15.0 + i * 0.01;
    values.push_back(std::exp(-0.5 * (x - 1) * (x - 1) / 4.0));
  }
  const Moments t = density_moments(Tabulated{{-15.0}, {17.0}, {3201}, values});
  EXPECT_NEAR(t.mean(0), 1.0, 1e-6);
  EXPECT_NEAR(t.covariance(0, 0), 4.0, 1e-5);
}

GTEST_TEST(Grid, DefaultHalfWidth) {
  EXPECT_EQ(default_half_width(qsb::testing::gauss1(0, 1), qsb::testing::gauss1(0, 0.5))[0], 8.0);
  EXPECT_NEAR(default_half_width(qsb::testing::gauss1(3, 2), qsb::testing::gauss1(0, 0.5))[0], 15.0, 1e-12);
}

GTEST_TEST(KernelMatrix, SymmetricPositiveAndMatchesPointwise) {
  const GridSpec g = build_grid({-3.0, -3.0}, {3.0, 3.0}, {20, 20});
  Eigen::MatrixXd Q(2, 2);
  Q << 2, 0.5, 0.5, 1;
  const SpectralQ spec = eigendecompose_q(Q);
  const KernelMatrix K = assemble_kernel_matrix(g, 0.2, 0.9, spec);
  EXPECT_EQ((K.values - K.values.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(K.values.minCoeff(), 0.0);
  qsb::testing::Gen gen(11);
  for (int k = 0; k < 20; ++k) {
    const int i = gen.integer(0, 399), j = gen.integer(0, 399);
    const double expected = kernel_q(0.2, g.node(i), 0.9, g.node(j), spec).value;
    EXPECT_NEAR(K.values(i, j), std::max(expected, std::numeric_limits<double>::min()), 1e-14 * expected + 1e-300);
  }
}

GTEST_TEST(KernelMatrix, ForwardAndBackwardAreAdjoint) {
  const GridSpec g = build_grid({-4.0}, {4.0}, {100});
  const KernelMatrix K = assemble_kernel_matrix(g, 0.0, 0.5, eigendecompose_q(Eigen::MatrixXd::Constant(1, 1, 3.0)));
  qsb::testing::Gen gen(12);
  const Eigen::VectorXd f = gen.vector(100, 0, 1), h = gen.vector(100, 0, 1);
  const double lhs = g.weights.dot(apply_forward(K, f).cwiseProduct(h));
  const double rhs = g.weights.dot(f.cwiseProduct(apply_backward(K, h)));
  EXPECT_NEAR(lhs, rhs, 1e-13 * std::abs(lhs));
}

GTEST_TEST(NodeGradient, ExactOnQuadraticsInTheInterior) {
  const GridSpec g = build_grid({-1.0, -2.0}, {1.0, 2.0}, {21, 41});
  Eigen::VectorXd f(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) f(i) = g.points(i, 0) * g.points(i, 0) + 3 * g.points(i, 1);
  const Eigen::MatrixXd grad = node_gradient(g, f);
  const Eigen::Index idx = g.flat_index(7, 30);
  EXPECT_NEAR(grad(idx, 0), 2 * g.points(idx, 0), 1e-12);
  EXPECT_NEAR(grad(idx, 1), 3.0, 1e-12);
  // One-sided at the edge: first-order.
  EXPECT_NEAR(grad(g.flat_index(0, 0), 0), -2.0 + 0.1, 1e-12);
}

GTEST_TEST(Interpolate, ExactOnBilinearFields) {
  const GridSpec g = build_grid({0.0, 0.0}, {1.0, 2.0}, {16, 16});
  Eigen::MatrixXd field(g.size(), 1);
  for (Eigen::Index i = 0; i < g.size(); ++i) field(i, 0) = 1 + 2 * g.points(i, 0) - g.points(i, 1) + g.points(i, 0) * g.points(i, 1);
  qsb::testing::Gen gen(13);
  for (int k = 0; k < 30; ++k) {
    const Eigen::Vector2d x(gen.uniform(0, 1), gen.uniform(0, 2));
    EXPECT_NEAR(interpolate(g, field, x)(0), 1 + 2 * x(0) - x(1) + x(0) * x(1), 1e-13);
  }
  // Clamped to the box.
  EXPECT_NEAR(interpolate(g, field, Eigen::Vector2d(5.0, -1.0))(0), 3.0, 1e-13);
}

}  // namespace
}  // namespace qsb
