#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <Eigen/Dense>

#include "qsb/csv.hpp"
#include "qsb/errors.hpp"
#include "qsb/grid.hpp"
#include "qsb/sinkhorn.hpp"

namespace qsb {

struct ProblemConfig {
  Eigen::MatrixXd Q;
  double t0 = 0.0;
  double t1 = 1.0;
};

struct GridConfig {
  std::vector<double> lower;  // empty: derived from the endpoint moments
  std::vector<double> upper;
  std::vector<int> counts;    // empty: 801 in 1D, 64 per axis in 2D
};

struct SdeConfig {
  int n_paths = 2000;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  int record_stride = 10;
};

struct OutputConfig {
  std::string directory = "runs";
  std::vector<double> times;  // interior density snapshots
  std::string format = "csv";
};

struct VerifyConfig {
  int random_points = 50;
  int sweep = 200;
  std::uint64_t seed = 7;
};

struct RunConfig {
  std::filesystem::path source;  // empty for built-in defaults
  std::string text;              // raw file contents, echoed into manifests
  ProblemConfig problem;
  DensitySpec rho0;
  DensitySpec rho1;
  GridConfig grid;
  SinkhornOptions sinkhorn;
  SdeConfig sde;
  OutputConfig output;
  VerifyConfig verify;
  std::vector<std::string> warnings;
};

namespace config_detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

/// Line numbers of "key = ..." lines, per section, for error reporting.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const std::string t = trim(line);
      if (t.empty() || t[0] == ';' || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq != std::string::npos) lines_[section + "." + trim(t.substr(0, eq))] = number;
    }
  }

  int line_of(const std::string& path) const {
    const auto it = lines_.find(path);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  std::map<std::string, int> lines_;
};

class Reader {
 public:
  Reader(const boost::property_tree::ptree& tree, const LineIndex& index, std::string origin)
      : tree_(tree), index_(index), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    const int line = index_.line_of(path);
    std::string where = origin_;
    if (line > 0) where += ":" + std::to_string(line);
    throw Error(ErrorCode::ConfigError, where + ": " + path + ": " + what);
  }

  bool has(const std::string& path) const {
    return static_cast<bool>(tree_.get_optional<std::string>(path));
  }

  std::string string(const std::string& path, const std::string& fallback) const {
    touched_.insert(path);
    return trim(tree_.get<std::string>(path, fallback));
  }

  std::string required(const std::string& path) const {
    touched_.insert(path);
    const auto v = tree_.get_optional<std::string>(path);
    if (!v) fail(path, "missing required key");
    return trim(*v);
  }

  double number(const std::string& path, double fallback) const {
    return has(path) ? parse_number(path, required(path)) : fallback;
  }

  long long integer(const std::string& path, long long fallback) const {
    if (!has(path)) return fallback;
    const std::string s = required(path);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) fail(path, "not an integer: '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      fail(path, "not an integer: '" + s + "'");
    }
  }

  std::vector<double> vector(const std::string& path, const std::string& s) const {
    std::vector<double> out;
    std::string token;
    std::istringstream in(s);
    while (std::getline(in, token, ',')) {
      std::istringstream words(token);
      std::string w;
      while (words >> w) out.push_back(parse_number(path, w));
    }
    return out;
  }

  std::vector<double> vector(const std::string& path) const { return vector(path, required(path)); }

  /// Rows separated by ';', entries by ',' or whitespace.
  Eigen::MatrixXd matrix(const std::string& path) const {
    const std::string s = required(path);
    std::vector<std::vector<double>> rows;
    std::string row;
    std::istringstream in(s);
    while (std::getline(in, row, ';')) {
      if (trim(row).empty()) continue;
      rows.push_back(vector(path, row));
    }
    if (rows.empty()) fail(path, "empty matrix");
    const std::size_t n = rows.front().size();
    for (const auto& r : rows) {
      if (r.size() != n) fail(path, "ragged matrix rows");
    }
    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) M(i, j) = rows[i][j];
    }
    return M;
  }

  /// Rejects names outside the known vocabulary before anything else is read.
  void check_vocabulary() const {
    static const std::set<std::string> plain = {
        "problem.Q", "problem.t0", "problem.t1", "grid.lower", "grid.upper", "grid.counts",
        "sinkhorn.tol", "sinkhorn.max_epochs", "sde.n_paths", "sde.dt", "sde.seed",
        "sde.record_stride", "output.directory", "output.times", "output.format",
        "verify.random_points", "verify.sweep", "verify.seed"};
    static const std::set<std::string> density = {"type", "mean", "covariance", "std", "weights",
                                                  "lower", "upper", "counts", "file"};
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) fail(section, "key outside of any section");
      for (const auto& [key, value] : body) {
        const std::string path = section + "." + key;
        if (plain.count(path)) continue;
        if (section == "rho0" || section == "rho1") {
          std::string stem = key;
          if (const auto u = key.rfind('_'); u != std::string::npos && u + 1 < key.size() &&
              key.find_first_not_of("0123456789", u + 1) == std::string::npos) {
            stem = key.substr(0, u);
            if (stem != "mean" && stem != "covariance" && stem != "std") stem.clear();
          }
          if (density.count(stem)) continue;
        }
        fail(path, "unknown key");
      }
    }
  }

  /// Rejects keys that no reader looked at (typos would otherwise be silent).
  void check_unused() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) {
        fail(section, "key outside of any section");
      }
      for (const auto& [key, value] : body) {
        const std::string path = section + "." + key;
        if (!touched_.count(path)) fail(path, "unknown key");
      }
    }
  }

 private:
  double parse_number(const std::string& path, const std::string& s) const {
    double v = 0.0;
    if (!csv::parse_double(s, v)) fail(path, "not a number: '" + s + "'");
    if (!std::isfinite(v)) fail(path, "not a finite number: '" + s + "'");
    return v;
  }

  const boost::property_tree::ptree& tree_;
  const LineIndex& index_;
  std::string origin_;
  mutable std::set<std::string> touched_;
};

/// Reads all numbers from a table file: comma or whitespace separated, '#'
/// comments, an optional non-numeric header line.
inline std::vector<double> read_table_values(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + file.string());
  std::vector<double> values;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream words(line);
    std::string w;
    std::vector<double> row;
    bool numeric = true;
    while (words >> w) {
      double v = 0.0;
      numeric = numeric && csv::parse_double(w, v);
      row.push_back(v);
    }
    if (!numeric) {
      require(values.empty(), ErrorCode::ConfigError,
              file.string() + ":" + std::to_string(number) + ": non-numeric entry");
      continue;  // header
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  return values;
}

inline Gaussian read_gaussian(const Reader& r, const std::string& section,
                              const std::string& suffix) {
  Gaussian g;
  const std::string mean_key = section + ".mean" + suffix;
  const std::vector<double> mean = r.vector(mean_key);
  g.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  const std::string cov_key = section + ".covariance" + suffix;
  const std::string std_key = section + ".std" + suffix;
  if (r.has(cov_key)) {
    g.covariance = r.matrix(cov_key);
  } else {
    const std::vector<double> sd = r.vector(std_key);
    if (sd.size() != mean.size()) r.fail(std_key, "std must have one entry per dimension");
    g.covariance = Eigen::MatrixXd::Zero(g.mean.size(), g.mean.size());
    for (std::size_t i = 0; i < sd.size(); ++i) g.covariance(i, i) = sd[i] * sd[i];
  }
  if (g.covariance.rows() != g.mean.size() || g.covariance.cols() != g.mean.size()) {
    r.fail(r.has(cov_key) ? cov_key : std_key, "covariance does not match the mean");
  }
  return g;
}

inline DensitySpec read_density(const Reader& r, const std::string& section,
                                const std::filesystem::path& base) {
  const std::string type = r.string(section + ".type", "gaussian");
  DensitySpec out;
  if (type == "gaussian") {
    out = read_gaussian(r, section, "");
  } else if (type == "mixture") {
    GaussianMixture mix;
    const std::vector<double> w = r.vector(section + ".weights");
    for (std::size_t k = 0; k < w.size(); ++k) {
      mix.weights.push_back(w[k]);
      mix.components.push_back(read_gaussian(r, section, "_" + std::to_string(k + 1)));
    }
    out = mix;
  } else if (type == "tabulated") {
    Tabulated tab;
    tab.lower = r.vector(section + ".lower");
    tab.upper = r.vector(section + ".upper");
    for (double c : r.vector(section + ".counts")) tab.counts.push_back(static_cast<int>(c));
    const std::filesystem::path file = base / r.required(section + ".file");
    if (!std::filesystem::exists(file)) r.fail(section + ".file", "no such file " + file.string());
    tab.values = read_table_values(file);
    out = tab;
  } else {
    r.fail(section + ".type", "expected gaussian, mixture or tabulated; got '" + type + "'");
  }
  try {
    validate_density(out);
  } catch (const Error& e) {
    r.fail(section + ".type", e.what());
  }
  return out;
}

inline void validate(RunConfig& cfg, const Reader& r) {
  const Eigen::Index n = cfg.problem.Q.rows();
  if (cfg.problem.Q.cols() != n) r.fail("problem.Q", "Q must be square");
  if (!(cfg.problem.t1 > cfg.problem.t0)) r.fail("problem.t1", "need t1 > t0");
  if (density_dim(cfg.rho0) != n) r.fail("rho0.type", "rho0 dimension does not match Q");
  if (density_dim(cfg.rho1) != n) r.fail("rho1.type", "rho1 dimension does not match Q");
  const auto dim = static_cast<std::size_t>(n);
  auto& g = cfg.grid;
  if (g.lower.empty() != g.upper.empty()) r.fail("grid.lower", "give both lower and upper");
  if (g.lower.empty()) {
    const std::vector<double> half = default_half_width(cfg.rho0, cfg.rho1);
    for (double h : half) {
      g.lower.push_back(-h);
      g.upper.push_back(h);
    }
  }
  if (g.counts.empty()) g.counts.assign(dim, dim == 1 ? 801 : 64);
  if (g.lower.size() != dim || g.upper.size() != dim || g.counts.size() != dim) {
    r.fail("grid.counts", "grid must have one entry per dimension");
  }
  if (cfg.sinkhorn.tol <= 0.0) r.fail("sinkhorn.tol", "tol must be positive");
  if (cfg.sinkhorn.max_epochs < 1) r.fail("sinkhorn.max_epochs", "max_epochs must be >= 1");
  if (cfg.sde.n_paths < 1) r.fail("sde.n_paths", "n_paths must be >= 1");
  if (cfg.sde.dt <= 0.0) r.fail("sde.dt", "dt must be positive");
  if (cfg.sde.record_stride < 1) r.fail("sde.record_stride", "record_stride must be >= 1");
  for (double t : cfg.output.times) {
    if (t < cfg.problem.t0 || t > cfg.problem.t1) r.fail("output.times", "time outside [t0, t1]");
  }
  if (cfg.output.format != "csv") r.fail("output.format", "only csv is supported");

  // 6σ containment is advisory only; a table just has to fit in the box.
  for (const DensitySpec* rho : {&cfg.rho0, &cfg.rho1}) {
    if (const auto* tab = std::get_if<Tabulated>(rho)) {
      for (std::size_t k = 0; k < dim; ++k) {
        if (tab->lower[k] < g.lower[k] || tab->upper[k] > g.upper[k]) {
          cfg.warnings.push_back("tabulated density on axis " + std::to_string(k) +
                                 " extends past the grid bounds");
          break;
        }
      }
      continue;
    }
    const Moments mo = density_moments(*rho);
    for (std::size_t k = 0; k < dim; ++k) {
      const double sd = std::sqrt(mo.covariance(k, k));
      if (mo.mean(k) - 6 * sd < g.lower[k] || mo.mean(k) + 6 * sd > g.upper[k]) {
        cfg.warnings.push_back("grid bounds on axis " + std::to_string(k) +
                               " do not contain 6 sigma of an endpoint density");
        break;
      }
    }
  }
}

inline RunConfig parse(const std::string& text, const std::filesystem::path& source) {
  namespace pt = boost::property_tree;
  const std::string origin = source.empty() ? "<config>" : source.string();
  pt::ptree tree;
  {
    std::istringstream in(text);
    try {
      pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error(ErrorCode::ConfigError,
                  origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
  }
  const LineIndex index(text);
  const Reader r(tree, index, origin);
  const std::filesystem::path base = source.empty() ? std::filesystem::path(".")
                                                    : source.parent_path();
  r.check_vocabulary();
  RunConfig cfg;
  cfg.source = source;
  cfg.text = text;
  cfg.problem.Q = r.matrix("problem.Q");
  cfg.problem.t0 = r.number("problem.t0", 0.0);
  cfg.problem.t1 = r.number("problem.t1", 1.0);
  cfg.rho0 = read_density(r, "rho0", base);
  cfg.rho1 = read_density(r, "rho1", base);
  if (r.has("grid.lower")) cfg.grid.lower = r.vector("grid.lower");
  if (r.has("grid.upper")) cfg.grid.upper = r.vector("grid.upper");
  if (r.has("grid.counts")) {
    for (double c : r.vector("grid.counts")) cfg.grid.counts.push_back(static_cast<int>(c));
  }
  cfg.sinkhorn.tol = r.number("sinkhorn.tol", cfg.sinkhorn.tol);
  cfg.sinkhorn.max_epochs = static_cast<int>(r.integer("sinkhorn.max_epochs", cfg.sinkhorn.max_epochs));
  cfg.sde.n_paths = static_cast<int>(r.integer("sde.n_paths", cfg.sde.n_paths));
  cfg.sde.dt = r.number("sde.dt", cfg.sde.dt);
  cfg.sde.seed = static_cast<std::uint64_t>(r.integer("sde.seed", static_cast<long long>(cfg.sde.seed)));
  cfg.sde.record_stride = static_cast<int>(r.integer("sde.record_stride", cfg.sde.record_stride));
  cfg.output.directory = r.string("output.directory", cfg.output.directory);
  if (r.has("output.times")) cfg.output.times = r.vector("output.times");
  cfg.output.format = r.string("output.format", cfg.output.format);
  cfg.verify.random_points = static_cast<int>(r.integer("verify.random_points", cfg.verify.random_points));
  cfg.verify.sweep = static_cast<int>(r.integer("verify.sweep", cfg.verify.sweep));
  cfg.verify.seed = static_cast<std::uint64_t>(r.integer("verify.seed", static_cast<long long>(cfg.verify.seed)));
  r.check_unused();
  validate(cfg, r);
  return cfg;
}

}  // namespace config_detail

inline RunConfig parse_config(const std::string& text,
                              const std::filesystem::path& source = {}) {
  return config_detail::parse(text, source);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::ConfigError, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

inline GridSpec grid_from_config(const RunConfig& cfg) {
  return build_grid(cfg.grid.lower, cfg.grid.upper, cfg.grid.counts);
}

/// 64-bit FNV-1a, used for short config hashes in run directory names.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace qsb
