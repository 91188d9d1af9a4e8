#include "qsb/config.hpp"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

namespace qsb {
namespace {

constexpr const char* kMinimal = R"([problem]
Q = 2

[rho0]
mean = 0
std = 1

[rho1]
mean = 1
std = 0.5
)";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "test.cfg");
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    return e.what();
  }
  ADD_FAILURE() << "config accepted";
  return {};
}

GTEST_TEST(Config, MinimalUsesDefaults) {
  const RunConfig cfg = parse_config(kMinimal, "");
  EXPECT_EQ(cfg.problem.Q(0, 0), 2.0);
  EXPECT_EQ(cfg.problem.t0, 0.0);
  EXPECT_EQ(cfg.problem.t1, 1.0);
  EXPECT_EQ(cfg.grid.counts, std::vector<int>{801});
  EXPECT_EQ(cfg.grid.lower, std::vector<double>{-8.0});
  EXPECT_EQ(cfg.grid.upper, std::vector<double>{8.0});
  EXPECT_EQ(cfg.sde.n_paths, 2000);
  EXPECT_EQ(cfg.sde.dt, 1e-3);
  EXPECT_EQ(cfg.sinkhorn.tol, 1e-10);
  EXPECT_EQ(cfg.output.format, "csv");
  EXPECT_TRUE(cfg.warnings.empty());
  const auto& g = std::get<Gaussian>(cfg.rho1);
  EXPECT_EQ(g.mean(0), 1.0);
  EXPECT_EQ(g.covariance(0, 0), 0.25);
}

GTEST_TEST(Config, WideDensityWidensDefaultBox) {
  std::string text = kMinimal;
  text.replace(text.find("std = 1\n"), 8, "std = 3\n");
  EXPECT_EQ(parse_config(text, "").grid.upper, std::vector<double>{18.0});
}

GTEST_TEST(Config, MatrixMixtureAndVectors) {
  const RunConfig cfg = parse_config(R"(
[problem]
Q = 1, 0.5; 0.5 2
t1 = 2

[rho0]
type = mixture
weights = 1 3
mean_1 = -1, 0
covariance_1 = 1, 0; 0, 1
mean_2 = 1, 0
std_2 = 0.5, 0.25

[rho1]
mean = 0, 0
std = 1, 1

[grid]
lower = -6, -5
upper = 6, 5
counts = 32, 40

[output]
times = 0.5, 1.5
)",
                                     "");
  EXPECT_EQ(cfg.problem.Q(0, 1), 0.5);
  EXPECT_EQ(cfg.problem.Q(1, 1), 2.0);
  const auto& mix = std::get<GaussianMixture>(cfg.rho0);
  ASSERT_EQ(mix.components.size(), 2u);
  EXPECT_EQ(mix.weights[1], 3.0);
  EXPECT_EQ(mix.components[1].covariance(1, 1), 0.0625);
  EXPECT_EQ(cfg.grid.counts, (std::vector<int>{32, 40}));
  EXPECT_EQ(cfg.output.times, (std::vector<double>{0.5, 1.5}));
}

GTEST_TEST(Config, ErrorsCarryFileAndLine) {
  std::string text = kMinimal;
  text += "\n[sde]\nn_paths = many\n";
  const std::string msg = error_of(text);
  EXPECT_NE(msg.find("test.cfg:13"), std::string::npos) << msg;
  EXPECT_NE(msg.find("sde.n_paths"), std::string::npos) << msg;
}

GTEST_TEST(Config, UnknownKeysAreRejected) {
  std::string text = kMinimal;
  text += "\n[sinkhorn]\ntolerance = 1e-9\n";
  const std::string msg = error_of(text);
  EXPECT_NE(msg.find("sinkhorn.tolerance: unknown key"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":13"), std::string::npos) << msg;
}

GTEST_TEST(Config, SemanticErrors) {
  EXPECT_NE(error_of("[problem]\nQ = 1\n[rho0]\nmean = 0\nstd = 1\n").find("rho1.mean: missing required key"),
            std::string::npos);
  std::string t = kMinimal;
  t.replace(t.find("Q = 2"), 5, "Q = 2, 1");
  EXPECT_NE(error_of(t).find("square"), std::string::npos);
  const std::string t2 = std::string(kMinimal) + "\n[output]\ntimes = 3\n";
  EXPECT_NE(error_of(t2).find("output.times"), std::string::npos);
  std::string t3 = std::string(kMinimal) + "\n[rho9]\n";
  EXPECT_NO_THROW(parse_config(t3, ""));
  std::string t4 = kMinimal;
  t4.replace(t4.find("std = 0.5"), 9, "std = nan");
  EXPECT_NE(error_of(t4).find("finite"), std::string::npos);
  std::string t5 = kMinimal;
  t5.replace(t5.find("mean = 1"), 8, "mean = 1, 2");
  EXPECT_NE(error_of(t5).find("std must have one entry per dimension"), std::string::npos);
  EXPECT_NE(error_of("seed = 2\n" + std::string(kMinimal)).find("outside of any section"), std::string::npos);
  EXPECT_NE(error_of("[problem\n").find("test.cfg:1"), std::string::npos);
}

GTEST_TEST(Config, SixSigmaWarning) {
  std::string text = std::string(kMinimal) + "\n[grid]\nlower = -3\nupper = 3\ncounts = 64\n";
  const RunConfig cfg = parse_config(text, "");
  ASSERT_EQ(cfg.warnings.size(), 2u);  // both endpoints
  EXPECT_NE(cfg.warnings[0].find("6 sigma"), std::string::npos);
}

GTEST_TEST(Config, TabulatedResolvesRelativeToConfig) {
  const auto dir = std::filesystem::temp_directory_path() / "qsb_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "table.csv") << "value\n1\n2\n3\n2\n1\n";
    std::ofstream(dir / "run.cfg") << "[problem]\nQ = 1\n[rho0]\ntype = tabulated\nlower = -1\nupper = 1\n"
                                      "counts = 5\nfile = table.csv\n[rho1]\nmean = 0\nstd = 1\n";
  }
  const RunConfig cfg = load_config(dir / "run.cfg");
  const auto& tab = std::get<Tabulated>(cfg.rho0);
  EXPECT_EQ(tab.values, (std::vector<double>{1, 2, 3, 2, 1}));
  std::filesystem::remove(dir / "table.csv");
  try {
    load_config(dir / "run.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("rho0.file"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

GTEST_TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"fig1_q0.cfg", "fig1_qlow.cfg", "fig1_qhigh.cfg", "fig5.cfg", "fig3_rows.cfg",
                           "fig4_himmelblau.cfg"}) {
    const RunConfig cfg = load_config(std::filesystem::path(QSB_CONFIG_DIR) / name);
    EXPECT_NO_THROW(grid_from_config(cfg)) << name;
    EXPECT_TRUE(cfg.warnings.empty()) << name;
  }
  const RunConfig himmel = load_config(std::filesystem::path(QSB_CONFIG_DIR) / "fig4_himmelblau.cfg");
  EXPECT_EQ(std::get<Tabulated>(himmel.rho0).values.size(), 41u * 41u);
}

GTEST_TEST(Config, HashIsStable) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

}  // namespace
}  // namespace qsb
