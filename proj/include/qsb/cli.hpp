#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "qsb/analytic.hpp"
#include "qsb/bridge.hpp"
#include "qsb/config.hpp"
#include "qsb/csv.hpp"
#include "qsb/errors.hpp"
#include "qsb/grid.hpp"
#include "qsb/kernels.hpp"
#include "qsb/parallel.hpp"
#include "qsb/sde.hpp"
#include "qsb/sinkhorn.hpp"
#include "qsb/spectral.hpp"
#include "qsb/verify.hpp"
#include "qsb/version.hpp"

namespace qsb::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNotConverged = 3;

struct Options {
  std::string config;
  std::string out;
  std::vector<double> times;
  std::optional<std::uint64_t> seed;
  int threads = -1;  // -1: not given
  std::string points;
  std::string run;
  std::string inject_fault;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline std::string hex8(std::uint64_t h) {
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << (h >> 32);
  return s.str();
}

inline std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline std::string config_hash(const RunConfig& cfg) { return hex8(fnv1a(cfg.text)); }

/// <base>/<UTC timestamp>_<config hash>, with a numeric suffix if taken.
inline fs::path fresh_run_dir(const fs::path& base, const RunConfig& cfg) {
  const std::string stem = utc_stamp() + "_" + config_hash(cfg);
  fs::path dir = base / stem;
  for (int k = 1; fs::exists(dir); ++k) dir = base / (stem + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

/// Most recent solve of this config under base (names sort by timestamp).
inline std::optional<fs::path> latest_run_dir(const fs::path& base, const RunConfig& cfg) {
  if (!fs::is_directory(base)) return std::nullopt;
  const std::string tag = "_" + config_hash(cfg);
  std::optional<fs::path> best;
  for (const auto& entry : fs::directory_iterator(base)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.find(tag) == std::string::npos) continue;
    if (!fs::exists(entry.path() / "factors.csv")) continue;
    if (!best || name > best->filename().string()) best = entry.path();
  }
  return best;
}

inline std::vector<std::string> coord_names(const std::string& prefix, int dim) {
  std::vector<std::string> out;
  for (int k = 0; k < dim; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

/// Rows of numbers from a points file; a non-numeric first line is a header.
inline std::vector<std::vector<double>> read_points(const fs::path& file, std::size_t width) {
  std::ifstream in(file);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open points file " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream words(line);
    std::vector<double> row;
    std::string w;
    bool numeric = true;
    while (words >> w) {
      double v = 0.0;
      numeric = numeric && csv::parse_double(w, v);
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (!numeric && rows.empty() && number == 1) continue;
    require(numeric, ErrorCode::ConfigError,
            file.string() + ":" + std::to_string(number) + ": non-numeric entry");
    require(row.size() == width, ErrorCode::ConfigError,
            file.string() + ":" + std::to_string(number) + ": expected " +
                std::to_string(width) + " values, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json grid_json(const GridSpec& g) {
  return {{"dim", g.dim}, {"lower", g.lower}, {"upper", g.upper}, {"counts", g.counts}};
}

inline nlohmann::json environment_json() {
  return {{"tool", "qsb"},
          {"version", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"compiler", __VERSION__},
          {"threads", num_threads()}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
}

inline BridgeSolution load_solution(const fs::path& run_dir, const RunConfig& cfg) {
  const fs::path file = run_dir / "factors.csv";
  if (!fs::exists(file)) {
    throw Error(ErrorCode::MissingSolve, "no factors.csv in " + run_dir.string() + "; run `qsb solve` first");
  }
  const GridSpec grid = grid_from_config(cfg);
  const csv::Table t = csv::read(file);
  require(static_cast<Eigen::Index>(t.rows.size()) == grid.size(), ErrorCode::ConfigError,
          "factors.csv has " + std::to_string(t.rows.size()) + " rows but the config grid has " +
              std::to_string(grid.size()) + " nodes");
  const std::size_t ph = t.column("phihat0"), p1 = t.column("phi1");
  SinkhornState state;
  state.phihat0.resize(grid.size());
  state.phi1.resize(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    for (int k = 0; k < grid.dim; ++k) {
      const double x = t.rows[i][t.column("x" + std::to_string(k))];
      require(std::abs(x - grid.points(i, k)) <= 1e-9 * std::max(1.0, std::abs(x)),
              ErrorCode::ConfigError, "factors.csv nodes do not match the config grid");
    }
    state.phihat0(i) = t.rows[i][ph];
    state.phi1(i) = t.rows[i][p1];
  }
  state.converged = true;
  return BridgeSolution(grid, eigendecompose_q(cfg.problem.Q), cfg.problem.t0, cfg.problem.t1,
                        std::move(state));
}

inline VerifyOptions verify_options(const Options& o) {
  VerifyOptions v;
  if (!o.config.empty()) {
    // Only the [verify] section matters; everything else may be absent.
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
      pt::ini_parser::read_ini(o.config, tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error(ErrorCode::ConfigError,
                  o.config + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    v.random_points = tree.get<int>("verify.random_points", v.random_points);
    v.sweep = tree.get<int>("verify.sweep", v.sweep);
    v.seed = tree.get<std::uint64_t>("verify.seed", v.seed);
  }
  if (!o.inject_fault.empty()) {
    require(o.inject_fault == "kernel", ErrorCode::InvalidArgument,
            "unknown fault '" + o.inject_fault + "' (supported: kernel)");
    v.kernel_perturbation = 1e-3;
  }
  return v;
}

}  // namespace detail

/// κ+(t0, x, t, x') at listed pairs; columns t, x…, x2…, log_kernel, kernel.
inline int cmd_kernel(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(o.config);
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
  require(!o.times.empty(), ErrorCode::InvalidArgument, "kernel needs at least one --t");
  require(!o.points.empty(), ErrorCode::InvalidArgument, "kernel needs --points FILE");
  const SpectralQ spec = eigendecompose_q(cfg.problem.Q);
  const auto rows = detail::read_points(o.points, 2 * static_cast<std::size_t>(spec.dim));
  std::vector<std::string> header{"t"};
  for (const auto& n : detail::coord_names("x", spec.dim)) header.push_back(n);
  for (const auto& n : detail::coord_names("x2_", spec.dim)) header.push_back(n);
  header.push_back("log_kernel");
  header.push_back("kernel");
  // Validate every time before writing anything.
  for (double t : o.times) qsb::detail::check_times(cfg.problem.t0, t);
  std::ofstream file;
  if (!o.out.empty()) {
    fs::path path(o.out);
    if (fs::is_directory(path)) path /= "kernel.csv";
    file.open(path, std::ios::binary);
    require(static_cast<bool>(file), ErrorCode::IoError, "cannot write " + path.string());
  }
  csv::Writer w(o.out.empty() ? out : file, header);
  for (double t : o.times) {
    for (const auto& r : rows) {
      const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(r.data(), spec.dim);
      const Eigen::VectorXd x2 = Eigen::Map<const Eigen::VectorXd>(r.data() + spec.dim, spec.dim);
      const KernelEval k = kernel_q(cfg.problem.t0, x, t, x2, spec);
      std::vector<double> row{t};
      row.insert(row.end(), r.begin(), r.end());
      row.push_back(k.log_value);
      row.push_back(k.value);
      w.row(row);
    }
  }
  w.close();
  return kExitOk;
}

inline int cmd_solve(const Options& o, std::ostream& out, std::ostream& err) {
  const auto start = detail::Clock::now();
  const RunConfig cfg = load_config(o.config);
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
  const GridSpec grid = grid_from_config(cfg);
  const SpectralQ spec = eigendecompose_q(cfg.problem.Q);
  const double t0 = cfg.problem.t0, t1 = cfg.problem.t1;

  std::vector<double> times = o.times.empty() ? cfg.output.times : o.times;
  if (times.empty()) {
    for (int k = 0; k <= 10; ++k) times.push_back(t0 + (t1 - t0) * k / 10.0);
  }
  for (double t : times) {
    require(t >= t0 && t <= t1, ErrorCode::TimeOutOfHorizon,
            "density time " + std::to_string(t) + " outside [t0, t1]");
  }

  const Eigen::VectorXd rho0 = discretize(cfg.rho0, grid);
  const Eigen::VectorXd rho1 = discretize(cfg.rho1, grid);
  if (!tails_negligible(grid, rho0) || !tails_negligible(grid, rho1)) {
    err << "warning: endpoint density is not negligible on the grid boundary\n";
  }
  const auto t_assemble = detail::Clock::now();
  const KernelMatrix K = assemble_kernel_matrix(grid, t0, t1, spec);
  const double assemble_s = detail::seconds_since(t_assemble);
  const auto t_solve = detail::Clock::now();
  const SinkhornState state = sinkhorn_solve(rho0, rho1, K, cfg.sinkhorn);
  const double solve_s = detail::seconds_since(t_solve);

  const fs::path base = o.out.empty() ? fs::path(cfg.output.directory) : fs::path(o.out);
  const fs::path dir = detail::fresh_run_dir(base, cfg);
  detail::write_text(dir / "config.cfg", cfg.text);

  {
    std::vector<std::string> header = detail::coord_names("x", grid.dim);
    for (const char* n : {"phihat0", "phi1", "rho0", "rho1"}) header.push_back(n);
    csv::Writer w(dir / "factors.csv", header);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      std::vector<double> row;
      for (int k = 0; k < grid.dim; ++k) row.push_back(grid.points(i, k));
      row.insert(row.end(), {state.phihat0(i), state.phi1(i), rho0(i), rho1(i)});
      w.row(row);
    }
    w.close();
  }
  {
    csv::Writer w(dir / "trace.csv", {"epoch", "hilbert", "residual0", "residual1"});
    for (const auto& e : state.history) {
      w.row({static_cast<double>(e.epoch), e.hilbert, e.residual0, e.residual1});
    }
    w.close();
  }

  nlohmann::json masses = nlohmann::json::array();
  double density_s = 0.0;
  if (state.converged) {
    const auto t_density = detail::Clock::now();
    const BridgeSolution sol(grid, spec, t0, t1, state);
    std::vector<std::string> header{"t"};
    for (const auto& n : detail::coord_names("x", grid.dim)) header.push_back(n);
    for (const char* n : {"rho_opt", "phihat", "phi"}) header.push_back(n);
    csv::Writer w(dir / "density_t.csv", header);
    for (double t : times) {
      const Factors f = sol.factors_at(t);
      const Eigen::VectorXd rho = f.phihat.cwiseProduct(f.phi);
      masses.push_back({{"t", t}, {"mass", grid.weights.dot(rho)}});
      for (Eigen::Index i = 0; i < grid.size(); ++i) {
        std::vector<double> row{t};
        for (int k = 0; k < grid.dim; ++k) row.push_back(grid.points(i, k));
        row.insert(row.end(), {rho(i), f.phihat(i), f.phi(i)});
        w.row(row);
      }
    }
    w.close();
    density_s = detail::seconds_since(t_density);
  }

  nlohmann::json manifest = {
      {"command", "solve"},
      {"environment", detail::environment_json()},
      {"config", {{"path", cfg.source.string()}, {"hash", detail::config_hash(cfg)}, {"text", cfg.text}}},
      {"grid", detail::grid_json(grid)},
      {"problem", {{"t0", t0}, {"t1", t1}, {"eigenvalues_half_q", std::vector<double>(spec.d.data(), spec.d.data() + spec.d.size())}}},
      {"sinkhorn",
       {{"tol", cfg.sinkhorn.tol},
        {"max_epochs", cfg.sinkhorn.max_epochs},
        {"converged", state.converged},
        {"epochs", state.epoch},
        {"residual0", state.residual0},
        {"residual1", state.residual1},
        {"contraction_ratio", state.contraction_ratio()}}},
      {"density_mass", masses},
      {"warnings", cfg.warnings},
      {"timings_s",
       {{"kernel_assembly", assemble_s},
        {"sinkhorn", solve_s},
        {"densities", density_s},
        {"total", detail::seconds_since(start)}}}};
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  out << dir.string() << "\n";
  if (!state.converged) {
    err << "NotConverged: Hilbert distance " << (state.hilbert_trace.empty() ? 0.0 : state.hilbert_trace.back())
        << " after " << state.epoch << " epochs (tol " << cfg.sinkhorn.tol << ")\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

inline int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto start = detail::Clock::now();
  const RunConfig cfg = load_config(o.config);
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
  fs::path run_dir;
  if (!o.run.empty()) {
    run_dir = o.run;
  } else {
    const auto found = detail::latest_run_dir(cfg.output.directory, cfg);
    if (!found) {
      throw Error(ErrorCode::MissingSolve, "no solve of this config under '" + cfg.output.directory +
                                               "'; run `qsb solve` or pass --run DIR");
    }
    run_dir = *found;
  }
  const BridgeSolution sol = detail::load_solution(run_dir, cfg);
  const std::uint64_t seed = o.seed.value_or(cfg.sde.seed);
  SimulationOptions sim;
  sim.record_stride = cfg.sde.record_stride;
  const PathEnsemble ens = simulate_paths(sol, cfg.rho0, cfg.sde.n_paths, cfg.sde.dt, seed, sim);
  const EndpointReport rep = endpoint_stats(ens, cfg.rho1);
  const Moments target = density_moments(cfg.rho1);

  const fs::path dir = o.out.empty() ? run_dir : fs::path(o.out);
  fs::create_directories(dir);
  {
    std::vector<std::string> header{"path_id", "t"};
    for (const auto& n : detail::coord_names("x", ens.dim)) header.push_back(n);
    csv::Writer w(dir / "paths.csv", header);
    for (int p = 0; p < ens.n_paths; ++p) {
      for (std::size_t s = 0; s < ens.times.size(); ++s) {
        std::vector<double> row{static_cast<double>(p), ens.times[s]};
        for (int k = 0; k < ens.dim; ++k) row.push_back(ens.at(p, s, k));
        w.row(row);
      }
    }
    w.close();
  }
  {
    csv::Writer w(dir / "stats.csv",
                  {"coordinate", "mean", "variance", "ks", "target_mean", "target_variance",
                   "n_paths", "dt", "seed", "clamped_paths", "time_avg_second_moment"});
    for (int k = 0; k < ens.dim; ++k) {
      w.row({static_cast<double>(k), rep.mean(k), rep.covariance(k, k), rep.ks[k], target.mean(k),
             target.covariance(k, k), static_cast<double>(ens.n_paths), ens.dt,
             static_cast<double>(seed), static_cast<double>(rep.clamped_paths),
             ens.time_avg_second_moment});
    }
    w.close();
  }
  nlohmann::json manifest = {
      {"command", "simulate"},
      {"environment", detail::environment_json()},
      {"run", run_dir.string()},
      {"config", {{"path", cfg.source.string()}, {"hash", detail::config_hash(cfg)}}},
      {"sde",
       {{"n_paths", ens.n_paths},
        {"dt", ens.dt},
        {"seed", seed},
        {"record_stride", sim.record_stride},
        {"rng", ens.rng},
        {"clamped_paths", rep.clamped_paths}}},
      {"timings_s", {{"total", detail::seconds_since(start)}}}};
  detail::write_text(dir / "simulate_manifest.json", manifest.dump(2) + "\n");
  out << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_verify(const Options& o, std::ostream& out, std::ostream&) {
  const VerifyReport report = run_property_suite(detail::verify_options(o));
  out << std::left << std::setw(30) << "check" << std::setw(6) << "result" << std::setw(14)
      << "value" << std::setw(12) << "bound" << "detail\n";
  for (const auto& c : report.checks) {
    std::ostringstream v, b;
    v << std::setprecision(4) << c.value;
    b << std::setprecision(4) << c.threshold;
    out << std::left << std::setw(30) << c.name << std::setw(6) << (c.pass ? "PASS" : "FAIL")
        << std::setw(14) << v.str() << std::setw(12) << b.str() << c.detail << "\n";
  }
  out << (report.all_pass() ? "ALL PASS" : "FAILURES PRESENT") << "\n";
  return report.all_pass() ? kExitOk : kExitFailure;
}

/// Closed-form φ̂ for f ≡ 1 and f = N(0, I); columns t, x…, phihat_unity,
/// phihat_gaussian. Zero eigen-directions use their continuous extension.
inline int cmd_analytic(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(o.config);
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
  require(!o.times.empty(), ErrorCode::InvalidArgument, "analytic needs at least one --t");
  require(!o.points.empty(), ErrorCode::InvalidArgument, "analytic needs --points FILE");
  const int dim = static_cast<int>(cfg.problem.Q.rows());
  const auto rows = detail::read_points(o.points, static_cast<std::size_t>(dim));
  std::vector<std::string> header{"t"};
  for (const auto& n : detail::coord_names("x", dim)) header.push_back(n);
  header.push_back("phihat_unity");
  header.push_back("phihat_gaussian");
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::binary);
    require(static_cast<bool>(file), ErrorCode::IoError, "cannot write " + o.out);
  }
  csv::Writer w(o.out.empty() ? out : file, header);
  for (double t : o.times) {
    require(t >= 0.0, ErrorCode::NonMonotoneTime, "t must be >= 0");
    for (const auto& r : rows) {
      const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(r.data(), dim);
      const double g = t > 0.0 ? phihat_gaussian(t, x, cfg.problem.Q, true)
                               : std::exp(-0.5 * x.squaredNorm()) /
                                     std::pow(2.0 * std::numbers::pi, 0.5 * dim);
      std::vector<double> row{t};
      row.insert(row.end(), r.begin(), r.end());
      row.push_back(phihat_unity(t, x, cfg.problem.Q, true));
      row.push_back(g);
      w.row(row);
    }
  }
  w.close();
  return kExitOk;
}

/// Entry point shared by the qsb binary and the CLI tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Schrödinger bridge with quadratic state cost"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options o;
  const auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "config file (INI)");
    if (config_required) c->required();
    c->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output location");
    sub->add_option("--threads", o.threads, "worker threads (0 = auto)");
  };
  auto* kernel = app.add_subcommand("kernel", "evaluate κ+ at point pairs");
  add_common(kernel, true);
  kernel->add_option("--t", o.times, "end time (repeatable)")->allow_extra_args(false);
  kernel->add_option("--points", o.points, "file with rows x..., x2...")->check(CLI::ExistingFile);
  auto* solve = app.add_subcommand("solve", "run the Sinkhorn recursion and write a run directory");
  add_common(solve, true);
  solve->add_option("--t", o.times, "density snapshot time (repeatable)")->allow_extra_args(false);
  auto* simulate = app.add_subcommand("simulate", "closed-loop sample paths from a solved run");
  add_common(simulate, true);
  simulate->add_option("--run", o.run, "run directory written by solve")->check(CLI::ExistingDirectory);
  simulate->add_option("--seed", o.seed, "RNG seed (overrides the config)");
  auto* verify = app.add_subcommand("verify", "run the property suite");
  add_common(verify, false);
  verify->add_option("--inject-fault", o.inject_fault, "perturb a component (kernel)");
  auto* analytic = app.add_subcommand("analytic", "closed-form φ̂ for constant and Gaussian data");
  add_common(analytic, true);
  analytic->add_option("--t", o.times, "time (repeatable)")->allow_extra_args(false);
  analytic->add_option("--points", o.points, "file with rows x...")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  set_num_threads(o.threads >= 0 ? o.threads : resolve_thread_count(-1));
  try {
    if (kernel->parsed()) return cmd_kernel(o, out, err);
    if (solve->parsed()) return cmd_solve(o, out, err);
    if (simulate->parsed()) return cmd_simulate(o, out, err);
    if (verify->parsed()) return cmd_verify(o, out, err);
    if (analytic->parsed()) return cmd_analytic(o, out, err);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace qsb::cli
