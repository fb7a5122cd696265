#pragma once

// Run configuration (sectioned key = value text), dataset loading, CSV and
// JSON emission, and the command implementations behind the CLI.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "levyconv/errors.hpp"
#include "levyconv/hypograph.hpp"
#include "levyconv/inference.hpp"
#include "levyconv/levy_basis.hpp"
#include "levyconv/simulator.hpp"
#include "levyconv/tail.hpp"

namespace levyconv {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kFitSchema = "levyconv.fit/1";

// ---------------------------------------------------------------------------
// Small text helpers

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto k = s.find(sep, start);
    out.push_back(trim(s.substr(start, k == std::string_view::npos ? std::string_view::npos : k - start)));
    if (k == std::string_view::npos) break;
    start = k + 1;
  }
  return out;
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto *end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v = 0;
  const auto *end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || s.empty()) return std::nullopt;
  return v;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace detail

/// Writes through a temporary file in the same directory, then renames.
inline void write_file_atomic(const std::filesystem::path &path, const std::string &content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::exists(dir, ec)) fs::create_directories(dir, ec);
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::IoError, "cannot move output into '" + path.string() + "'");
  }
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Run configuration

/// Raw sectioned key/value text. Grammar, one item per line:
///   [section]          starts a section
///   key = value        assignment inside the current section
///   # or ;             comment to end of line (whole-line comments only)
class ConfigText {
public:
  static ConfigText parse(std::string_view text) {
    static const std::map<std::string, std::set<std::string>> allowed = {
        {"run", {"output", "input", "rng_seed", "command"}},
        {"seed", {"family", "variance", "intensity", "shape", "rate", "mean", "theta"}},
        {"kernel", {"family", "rho", "nu", "nugget"}},
        {"anisotropy", {"angle", "stretch"}},
        {"sites", {"layout", "nx", "ny", "n", "spacing"}},
        {"simulation",
         {"method", "replicates", "grid_cell", "height_cell", "tail_mass_eps", "cavalieri_layers", "max_cells"}},
        {"covariance", {"u_max", "n_lags"}},
        {"tail", {"lags", "levels", "pairs"}},
        {"fit",
         {"likelihood", "pair_cutoff", "starts", "tolerance", "max_evaluations", "free_nugget",
          "free_anisotropy", "fixed", "seed"}},
        {"bootstrap", {"resamples", "block_length", "fit_result"}},
    };
    ConfigText c;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = detail::trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      auto fail = [&](const std::string &msg) {
        throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": " + msg);
      };
      if (line.front() == '[') {
        if (line.back() != ']') fail("unterminated section header");
        section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
        if (!allowed.count(section)) fail("unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail("expected key = value");
      if (section.empty()) fail("assignment outside a section");
      const std::string key = detail::trim(std::string_view(line).substr(0, eq));
      const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
      if (!allowed.at(section).count(key)) fail("unknown key '" + key + "' in [" + section + "]");
      const std::string full = section + "." + key;
      if (c.values_.count(full)) fail("duplicate key '" + full + "'");
      c.values_[full] = value;
    }
    return c;
  }

  bool has(const std::string &key) const { return values_.count(key) > 0; }
  std::string str(const std::string &key, const std::string &fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  double num(const std::string &key, double fallback) const {
    if (!has(key)) return fallback;
    auto v = detail::to_double(values_.at(key));
    if (!v) throw Error(ErrorKind::ConfigError, "'" + key + "' must be a number");
    return *v;
  }
  std::int64_t integer(const std::string &key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    auto v = detail::to_int(values_.at(key));
    if (!v) throw Error(ErrorKind::ConfigError, "'" + key + "' must be an integer");
    return *v;
  }
  bool flag(const std::string &key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto &v = values_.at(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorKind::ConfigError, "'" + key + "' must be true or false");
  }
  std::vector<double> numbers(const std::string &key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto &p : detail::split(values_.at(key), ',')) {
      auto v = detail::to_double(p);
      if (!v) throw Error(ErrorKind::ConfigError, "'" + key + "' must be a comma-separated number list");
      out.push_back(*v);
    }
    return out;
  }

  /// Canonical form: sorted key=value lines.
  std::string canonical() const {
    std::string s;
    for (const auto &[k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }
  std::string hash() const {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a(canonical());
    return ss.str();
  }

private:
  std::map<std::string, std::string> values_;
};

enum class SiteLayout { Grid, Line, Input };

/// Validated run configuration.
struct RunConfig {
  std::string hash;
  std::string output;
  std::string input;
  std::uint64_t rng_seed = 1;

  LevySeed seed = LevySeed::gamma(1.0, 1.0);
  HeightFunction kernel = HeightFunction::gaussian(1.0);
  double nugget = 0.0;
  std::optional<Anisotropy> anisotropy;

  SiteLayout layout = SiteLayout::Grid;
  std::size_t nx = 5, ny = 5, n_line = 10;
  double spacing = 1.0;

  std::string method = "grid";
  SimulationConfig simulation;

  double cov_u_max = 3.0;
  std::size_t cov_n_lags = 31;

  std::vector<double> tail_lags = {0.5, 1.0};
  std::vector<double> tail_levels = {0.9, 0.95, 0.99};
  std::size_t tail_pairs = 100000;

  LikelihoodKind likelihood = LikelihoodKind::PairwiseContinuous;
  FitOptions fit;
  bool free_nugget = false;
  bool free_anisotropy = false;
  std::vector<std::string> fixed;

  int resamples = 50;
  std::size_t block_length = 1;
  std::string fit_result;

  HeightFunction full_kernel() const { return kernel.with_nugget(nugget); }

  SiteSet sites() const {
    switch (layout) {
    case SiteLayout::Grid: return SiteSet::grid(nx, ny, spacing);
    case SiteLayout::Line: return SiteSet::line(n_line, spacing);
    case SiteLayout::Input: break;
    }
    throw Error(ErrorKind::ConfigError, "site layout 'input' takes its sites from the dataset");
  }

  /// Model to fit: configured values as starting point and free mask.
  ModelSpec model() const {
    std::optional<double> nug;
    if (free_nugget) nug = nugget > 0.0 ? nugget : 0.1;
    std::optional<Anisotropy> an = anisotropy;
    if (free_anisotropy && !an) an = Anisotropy(0.0, 1.5);
    ModelSpec m(seed, kernel, nug, an);
    if (!free_nugget && nugget > 0.0) m.fix_nugget(nugget);
    if (!free_anisotropy && an) m.fix("angle").fix("stretch"); // fixed, still applied to lags
    for (const auto &name : fixed) m.fix(name);
    return m;
  }
};

inline RunConfig parse_run_config(std::string_view text) {
  const ConfigText c = ConfigText::parse(text);
  RunConfig r;
  r.hash = c.hash();
  try {
    r.output = c.str("run.output", "out");
    r.input = c.str("run.input");
    const auto seed = c.integer("run.rng_seed", 1);
    require(seed >= 0, "rng_seed must be nonnegative", ErrorKind::ConfigError);
    r.rng_seed = static_cast<std::uint64_t>(seed);

    const SeedFamily sf = parse_seed_family(c.str("seed.family", "gamma"));
    std::vector<double> sp;
    for (const auto &name : LevySeed::parameter_names(sf)) {
      require(c.has("seed." + name), "seed parameter '" + name + "' is required", ErrorKind::ConfigError);
      sp.push_back(c.num("seed." + name, 0.0));
    }
    for (const auto &k : {"variance", "intensity", "shape", "rate", "mean", "theta"}) {
      const auto names = LevySeed::parameter_names(sf);
      if (c.has(std::string("seed.") + k) && std::find(names.begin(), names.end(), k) == names.end())
        throw Error(ErrorKind::ConfigError, std::string("seed key '") + k + "' does not apply to this family");
    }
    r.seed = LevySeed::from_parameters(sf, sp);

    const KernelFamily kf = parse_kernel_family(c.str("kernel.family", "gaussian"));
    require(kf != KernelFamily::Nugget && kf != KernelFamily::ConvexSum,
            "kernel family must be a continuous height function", ErrorKind::ConfigError);
    const double rho = c.num("kernel.rho", 1.0);
    if (kf == KernelFamily::StudentT)
      r.kernel = HeightFunction::student_t(rho, c.num("kernel.nu", c.str("kernel.family") == "cauchy" ? 1.0 : 3.0));
    else {
      require(!c.has("kernel.nu"), "'nu' applies to student_t kernels only", ErrorKind::ConfigError);
      r.kernel = HeightFunction::from_parameters(kf, {rho});
    }
    r.nugget = c.num("kernel.nugget", 0.0);
    require(r.nugget >= 0.0 && r.nugget < 1.0, "nugget must lie in [0, 1)", ErrorKind::ConfigError);

    if (c.has("anisotropy.angle") || c.has("anisotropy.stretch"))
      r.anisotropy = Anisotropy(c.num("anisotropy.angle", 0.0), c.num("anisotropy.stretch", 1.0));

    const std::string layout = c.str("sites.layout", "grid");
    if (layout == "grid")
      r.layout = SiteLayout::Grid;
    else if (layout == "line")
      r.layout = SiteLayout::Line;
    else if (layout == "input")
      r.layout = SiteLayout::Input;
    else
      throw Error(ErrorKind::ConfigError, "sites.layout must be grid, line or input");
    const auto nx = c.integer("sites.nx", 5), ny = c.integer("sites.ny", 5), nl = c.integer("sites.n", 10);
    require(nx >= 1 && ny >= 1 && nl >= 1, "site counts must be positive", ErrorKind::ConfigError);
    r.nx = static_cast<std::size_t>(nx);
    r.ny = static_cast<std::size_t>(ny);
    r.n_line = static_cast<std::size_t>(nl);
    r.spacing = c.num("sites.spacing", 1.0);
    require(r.spacing > 0.0 && std::isfinite(r.spacing), "sites.spacing must be positive", ErrorKind::ConfigError);

    r.method = c.str("simulation.method", "grid");
    require(r.method == "grid" || r.method == "cavalieri", "simulation.method must be grid or cavalieri",
            ErrorKind::ConfigError);
    require(r.method == "grid" || r.nugget == 0.0, "cavalieri stacking takes no nugget", ErrorKind::ConfigError);
    r.simulation.n_replicates = static_cast<int>(c.integer("simulation.replicates", 1));
    r.simulation.grid_cell = c.num("simulation.grid_cell", 0.0);
    r.simulation.height_cell = c.num("simulation.height_cell", 0.0);
    r.simulation.tail_mass_eps = c.num("simulation.tail_mass_eps", 0.01);
    r.simulation.cavalieri_layers = static_cast<int>(c.integer("simulation.cavalieri_layers", 64));
    r.simulation.max_cells = c.num("simulation.max_cells", 2e7);
    r.simulation.rng_seed = r.rng_seed;
    r.simulation.validate();

    r.cov_u_max = c.num("covariance.u_max", 3.0);
    const auto nlag = c.integer("covariance.n_lags", 31);
    require(r.cov_u_max > 0.0 && nlag >= 2, "covariance grid needs u_max > 0 and n_lags >= 2",
            ErrorKind::ConfigError);
    r.cov_n_lags = static_cast<std::size_t>(nlag);

    r.tail_lags = c.numbers("tail.lags", r.tail_lags);
    r.tail_levels = c.numbers("tail.levels", r.tail_levels);
    for (double u : r.tail_lags) require(u >= 0.0, "tail lags must be >= 0", ErrorKind::ConfigError);
    for (double q : r.tail_levels)
      require(q > 0.5 && q < 1.0, "tail levels must lie in (0.5, 1)", ErrorKind::ConfigError);
    const auto np = c.integer("tail.pairs", 100000);
    require(np >= 500, "tail.pairs must be >= 500", ErrorKind::ConfigError);
    r.tail_pairs = static_cast<std::size_t>(np);

    r.likelihood = parse_likelihood_kind(
        c.str("fit.likelihood", r.seed.is_discrete() ? "pairwise_discrete" : "pairwise_continuous"));
    if (c.has("fit.pair_cutoff")) {
      r.fit.pair_cutoff = c.num("fit.pair_cutoff", 0.0);
      require(*r.fit.pair_cutoff > 0.0, "fit.pair_cutoff must be positive", ErrorKind::ConfigError);
    }
    r.fit.n_starts = static_cast<int>(c.integer("fit.starts", 5));
    r.fit.tolerance = c.num("fit.tolerance", 1e-6);
    r.fit.max_evaluations = static_cast<int>(c.integer("fit.max_evaluations", 2000));
    r.fit.seed = static_cast<std::uint64_t>(c.integer("fit.seed", static_cast<std::int64_t>(r.rng_seed)));
    require(r.fit.n_starts >= 1 && r.fit.tolerance > 0.0 && r.fit.max_evaluations >= 1,
            "fit settings must be positive", ErrorKind::ConfigError);
    r.free_nugget = c.flag("fit.free_nugget", false);
    r.free_anisotropy = c.flag("fit.free_anisotropy", false);
    if (c.has("fit.fixed"))
      for (const auto &n : detail::split(c.str("fit.fixed"), ','))
        if (!n.empty()) r.fixed.push_back(n);
    if (r.likelihood == LikelihoodKind::PairwiseDifference)
      require(r.seed.family() == SeedFamily::Gamma, "the difference likelihood needs a gamma seed",
              ErrorKind::ConfigError);
    if (r.likelihood == LikelihoodKind::PairwiseDiscrete)
      require(r.seed.is_discrete(), "the discrete likelihood needs a count seed", ErrorKind::ConfigError);
    if (r.likelihood == LikelihoodKind::PairwiseContinuous)
      require(!r.seed.is_discrete(), "the continuous likelihood needs a continuous seed", ErrorKind::ConfigError);
    (void)r.model(); // rejects unknown names in fit.fixed

    r.resamples = static_cast<int>(c.integer("bootstrap.resamples", 50));
    require(r.resamples >= 50, "bootstrap.resamples must be >= 50", ErrorKind::ConfigError);
    const auto bl = c.integer("bootstrap.block_length", 1);
    require(bl >= 1, "bootstrap.block_length must be >= 1", ErrorKind::ConfigError);
    r.block_length = static_cast<std::size_t>(bl);
    r.fit_result = c.str("bootstrap.fit_result");
  } catch (const Error &e) {
    if (e.kind() == ErrorKind::InvalidArgument) throw Error(ErrorKind::ConfigError, e.what());
    throw;
  }
  return r;
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
  return parse_run_config(read_file(path));
}

// ---------------------------------------------------------------------------
// Datasets

inline std::string output_header(const std::string &config_hash) {
  return "# levyconv " + std::string(kVersion) + " config=" + config_hash + "\n";
}

/// Columns replicate,site_id,x,y[,t],value; replicates numbered from 1.
inline std::string field_sample_csv(const FieldSample &fs, const std::string &config_hash) {
  std::string s = output_header(config_hash);
  const bool times = fs.sites.has_times();
  s += times ? "replicate,site_id,x,y,t,value\n" : "replicate,site_id,x,y,value\n";
  for (std::size_t r = 0; r < fs.n_replicates; ++r)
    for (std::size_t i = 0; i < fs.n_sites(); ++i) {
      s += std::to_string(r + 1) + "," + std::to_string(fs.sites.id(i)) + "," +
           detail::format_double(fs.sites.coords[i][0]) + "," + detail::format_double(fs.sites.coords[i][1]) + ",";
      if (times) s += detail::format_double(fs.sites.times[i]) + ",";
      s += detail::format_double(fs.at(r, i)) + "\n";
    }
  return s;
}

struct LoadedDataset {
  Dataset data;
  std::size_t rows = 0;
};

/// Comma-separated text with a header row; '#' lines are comments. Required
/// columns site_id, x, y, value; optional replicate, t, covariate. A value of
/// NA (or empty) masks the cell.
inline LoadedDataset parse_dataset(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    header = detail::split(line, ',');
    break;
  }
  if (header.empty()) throw Error(ErrorKind::SchemaError, "dataset has no header row");
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (col.count(header[k])) throw Error(ErrorKind::SchemaError, "duplicate column '" + header[k] + "'");
    col[header[k]] = k;
  }
  for (const char *req : {"site_id", "x", "y", "value"})
    if (!col.count(req)) throw Error(ErrorKind::SchemaError, std::string("missing column '") + req + "'");
  const bool has_rep = col.count("replicate") > 0;
  const bool has_t = col.count("t") > 0;
  const bool has_cov = col.count("covariate") > 0;

  struct SiteInfo {
    double x, y, t, cov;
    std::size_t index;
  };
  std::map<std::int64_t, SiteInfo> sites;
  std::vector<std::int64_t> site_order;
  std::map<std::int64_t, std::size_t> reps;
  struct Cell {
    std::int64_t rep;
    std::int64_t site;
    double value;
    std::size_t line;
  };
  std::vector<Cell> cells;
  std::size_t rows = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split(line, ',');
    auto fail = [&](const std::string &msg) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + msg);
    };
    if (f.size() != header.size()) fail("expected " + std::to_string(header.size()) + " fields");
    auto number = [&](const char *name) {
      auto v = detail::to_double(f[col.at(name)]);
      if (!v || !std::isfinite(*v)) fail(std::string("bad number in column '") + name + "'");
      return *v;
    };
    const auto id = detail::to_int(f[col.at("site_id")]);
    if (!id) fail("site_id must be an integer");
    std::int64_t rep = 1;
    if (has_rep) {
      const auto rv = detail::to_int(f[col.at("replicate")]);
      if (!rv) fail("replicate must be an integer");
      rep = *rv;
    }
    const double x = number("x"), y = number("y");
    const double t = has_t ? number("t") : 0.0;
    const double cov = has_cov ? number("covariate") : 0.0;
    double value = kNaN;
    const auto &vs = f[col.at("value")];
    if (!vs.empty() && vs != "NA") value = number("value");

    auto it = sites.find(*id);
    if (it == sites.end()) {
      sites.emplace(*id, SiteInfo{x, y, t, cov, site_order.size()});
      site_order.push_back(*id);
    } else if (it->second.x != x || it->second.y != y || it->second.t != t) {
      throw Error(ErrorKind::InconsistentCoordinates,
                  "line " + std::to_string(line_no) + ": site " + std::to_string(*id) +
                      " appears with different coordinates");
    } else if (it->second.cov != cov) {
      throw Error(ErrorKind::InconsistentCoordinates,
                  "line " + std::to_string(line_no) + ": site " + std::to_string(*id) +
                      " appears with different covariate values");
    }
    reps.emplace(rep, 0);
    cells.push_back({rep, *id, value, line_no});
    ++rows;
  }
  if (rows == 0) throw Error(ErrorKind::SchemaError, "dataset has no data rows");
  std::size_t k = 0;
  for (auto &[r, idx] : reps) idx = k++;

  LoadedDataset out;
  out.rows = rows;
  Dataset &d = out.data;
  for (auto id : site_order) {
    const auto &s = sites.at(id);
    d.sites.coords.push_back({s.x, s.y});
    d.sites.ids.push_back(id);
    if (has_t) d.sites.times.push_back(s.t);
    if (has_cov) d.covariate.push_back(s.cov);
  }
  d.n_replicates = reps.size();
  const std::size_t n = site_order.size();
  d.values.assign(d.n_replicates * n, kNaN);
  std::vector<char> seen(d.values.size(), 0);
  for (const auto &c : cells) {
    const std::size_t cell = reps.at(c.rep) * n + sites.at(c.site).index;
    if (seen[cell])
      throw Error(ErrorKind::SchemaError, "line " + std::to_string(c.line) + ": replicate " +
                                              std::to_string(c.rep) + " repeats site " + std::to_string(c.site));
    seen[cell] = 1;
    d.values[cell] = c.value;
  }
  for (std::size_t cell = 0; cell < seen.size(); ++cell)
    if (!seen[cell])
      throw Error(ErrorKind::SchemaError, "replicate row " + std::to_string(cell / n + 1) + " lacks site " +
                                              std::to_string(site_order[cell % n]) + " (use NA to mask)");
  if (n < 2) throw Error(ErrorKind::SchemaError, "dataset needs at least two sites");
  return out;
}

inline LoadedDataset load_dataset(const std::filesystem::path &path) {
  return parse_dataset(read_file(path));
}

// ---------------------------------------------------------------------------
// FitResult JSON

inline nlohmann::json fit_result_to_json(const FitResult &r, const std::string &config_hash) {
  using nlohmann::json;
  json params = json::array();
  const auto &ps = r.model.parameters();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    json p = {{"name", ps[k].name}, {"estimate", ps[k].value}, {"free", ps[k].free}};
    if (r.std_errors && std::isfinite((*r.std_errors)[k]))
      p["std_error"] = (*r.std_errors)[k];
    else
      p["std_error"] = nullptr;
    params.push_back(p);
  }
  json starts = json::array();
  for (const auto &s : r.starts)
    starts.push_back({{"start_loglik", s.start_loglik},
                      {"loglik", s.loglik},
                      {"evaluations", s.evaluations},
                      {"converged", s.converged}});
  json j = {{"schema", kFitSchema},
            {"version", kVersion},
            {"config_hash", config_hash},
            {"likelihood", to_string(r.kind)},
            {"seed_family", to_string(r.model.seed_family())},
            {"kernel_family", to_string(r.model.kernel_family())},
            {"parameters", params},
            {"loglik", r.loglik},
            {"clic", r.clic ? json(*r.clic) : json(nullptr)},
            {"evaluations", r.evaluations},
            {"converged", r.converged},
            {"pair_cutoff", r.pair_cutoff ? json(*r.pair_cutoff) : json(nullptr)},
            {"starts", starts},
            {"notes", r.notes}};
  return j;
}

inline FitResult fit_result_from_json(const nlohmann::json &j) {
  try {
    if (j.at("schema").get<std::string>() != kFitSchema)
      throw Error(ErrorKind::SchemaError, "unsupported fit result schema");
    const SeedFamily sf = parse_seed_family(j.at("seed_family").get<std::string>());
    const KernelFamily kf = parse_kernel_family(j.at("kernel_family").get<std::string>());
    std::map<std::string, std::pair<double, bool>> p;
    for (const auto &e : j.at("parameters"))
      p[e.at("name").get<std::string>()] = {e.at("estimate").get<double>(), e.at("free").get<bool>()};
    std::vector<double> sv;
    for (const auto &n : LevySeed::parameter_names(sf)) sv.push_back(p.at(n).first);
    const auto seed = LevySeed::from_parameters(sf, sv);
    const auto kernel = kf == KernelFamily::StudentT ? HeightFunction::student_t(p.at("rho").first, p.at("nu").first)
                                                     : HeightFunction::from_parameters(kf, {p.at("rho").first});
    std::optional<double> nug;
    if (p.count("nugget") && p.at("nugget").first > 0.0) nug = p.at("nugget").first;
    std::optional<Anisotropy> an;
    if (p.count("angle")) an = Anisotropy(p.at("angle").first, std::max(p.at("stretch").first, 1.0 + 1e-12));
    ModelSpec m(seed, kernel, nug, an);
    if (p.count("nugget") && !nug) m.fix_nugget(0.0);
    if (an) m.set("stretch", p.at("stretch").first);
    for (const auto &[name, v] : p) m.fix(name, !v.second);
    FitResult r{m, parse_likelihood_kind(j.at("likelihood").get<std::string>()), -kInf, 0, false, {}, {}, std::nullopt, std::nullopt, std::nullopt};
    r.loglik = j.at("loglik").is_null() ? -kInf : j.at("loglik").get<double>();
    r.evaluations = j.at("evaluations").get<int>();
    r.converged = j.at("converged").get<bool>();
    if (!j.at("pair_cutoff").is_null()) r.pair_cutoff = j.at("pair_cutoff").get<double>();
    if (!j.at("clic").is_null()) r.clic = j.at("clic").get<double>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorKind::SchemaError, std::string("malformed fit result: ") + e.what());
  } catch (const std::out_of_range &) {
    throw Error(ErrorKind::SchemaError, "fit result lacks a model parameter");
  }
}

/// Table 1 style (logPL, estimates, nugget) followed by the Table 2 style
/// estimates with bootstrap standard errors and CLIC.
inline std::string fit_table(const FitResult &r, const std::string &config_hash) {
  std::ostringstream s;
  s << output_header(config_hash);
  s << "likelihood: " << to_string(r.kind) << "   seed: " << to_string(r.model.seed_family())
    << "   kernel: " << to_string(r.model.kernel_family()) << "\n\n";
  s << std::left << std::setw(14) << "logPL";
  for (const auto &p : r.model.parameters()) s << std::setw(16) << p.name;
  s << "\n" << std::setw(14) << detail::format_double(std::round(r.loglik * 1e3) / 1e3);
  for (const auto &p : r.model.parameters()) {
    std::ostringstream v;
    v << std::setprecision(5) << p.value << (p.free ? "" : "*");
    s << std::setw(16) << v.str();
  }
  s << "\n";
  if (r.std_errors) {
    s << "\n";
    const auto &ps = r.model.parameters();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      std::ostringstream v;
      v << std::setprecision(5) << ps[k].value;
      if (std::isfinite((*r.std_errors)[k])) v << " (" << std::setprecision(3) << (*r.std_errors)[k] << ")";
      s << std::setw(16) << ps[k].name << v.str() << "\n";
    }
    s << std::setw(16) << "CLIC" << (r.clic ? detail::format_double(std::round(*r.clic * 1e3) / 1e3) : "NA") << "\n";
  }
  s << "\n* fixed\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// Commands

inline FieldSample simulate_from_config(const RunConfig &c) {
  const SiteSet sites = c.sites();
  if (c.method == "cavalieri") return simulate_cavalieri(c.seed, c.kernel, sites, c.simulation, c.anisotropy);
  return simulate_grid(c.seed, c.full_kernel(), sites, c.simulation, c.anisotropy);
}

inline void cmd_simulate(const RunConfig &c) {
  write_file_atomic(c.output + ".csv", field_sample_csv(simulate_from_config(c), c.hash));
}

inline void cmd_covariance(const RunConfig &c) {
  const auto h = c.full_kernel();
  std::string s = output_header(c.hash) + "u,correlation\n";
  for (std::size_t k = 0; k < c.cov_n_lags; ++k) {
    const double u = c.cov_u_max * static_cast<double>(k) / static_cast<double>(c.cov_n_lags - 1);
    s += detail::format_double(u) + "," + detail::format_double(h.correlation(u)) + "\n";
  }
  write_file_atomic(c.output + ".csv", s);
}

inline void cmd_tail(const RunConfig &c) {
  const auto h = c.full_kernel();
  std::optional<TailClass> tc;
  if (c.seed.family() == SeedFamily::Gamma || c.seed.family() == SeedFamily::InverseGaussian)
    tc = TailClass::for_seed(c.seed);
  std::string s = output_header(c.hash) +
                  "u,correlation,chi_theory,chibar_theory,q,chi_hat,chi_se,chibar_hat,chibar_se,joint\n";
  for (std::size_t k = 0; k < c.tail_lags.size(); ++k) {
    const double u = c.tail_lags[k];
    const auto g = pair_geometry(h, u);
    std::string theory = "NA,NA";
    if (tc) {
      const auto t = theoretical_chi(*tc, g);
      theory = detail::format_double(t.chi) + "," + detail::format_double(t.chibar);
    }
    const auto pairs = simulate_pairs(c.seed, g, c.tail_pairs, splitmix64(c.rng_seed + k));
    for (double q : c.tail_levels) {
      s += detail::format_double(u) + "," + detail::format_double(h.correlation(u)) + "," + theory + "," +
           detail::format_double(q) + ",";
      try {
        const auto e = empirical_chi(pairs, q);
        s += detail::format_double(e.chi) + "," + detail::format_double(e.chi_se) + "," +
             detail::format_double(e.chibar) + "," + detail::format_double(e.chibar_se) + "," +
             std::to_string(e.joint_exceedances) + "\n";
      } catch (const Error &e) {
        if (e.kind() != ErrorKind::DegenerateTail) throw;
        s += "NA,NA,NA,NA,0\n";
      }
    }
  }
  write_file_atomic(c.output + ".csv", s);
}

/// Dataset for fitting: the input file, or a simulation from the config.
inline Dataset dataset_for_fit(const RunConfig &c) {
  if (!c.input.empty()) return load_dataset(c.input).data;
  return Dataset::from_sample(simulate_from_config(c));
}

inline void write_fit(const RunConfig &c, const FitResult &r) {
  write_file_atomic(c.output + ".json", fit_result_to_json(r, c.hash).dump(2) + "\n");
  write_file_atomic(c.output + ".txt", fit_table(r, c.hash));
}

inline FitResult run_fit(const RunConfig &c, const Dataset &d) {
  FitResult r = fit(c.model(), d, c.likelihood, c.fit);
  if (d.n_replicates < 2)
    r.notes.push_back("single replicate: bootstrap standard errors and CLIC are unavailable");
  return r;
}

inline void cmd_fit(const RunConfig &c) { write_fit(c, run_fit(c, dataset_for_fit(c))); }

inline void cmd_bootstrap(const RunConfig &c) {
  const Dataset d = dataset_for_fit(c);
  FitResult r = c.fit_result.empty() ? run_fit(c, d) : fit_result_from_json(nlohmann::json::parse(read_file(c.fit_result)));
  if (d.n_replicates < 2)
    throw Error(ErrorKind::InvalidArgument, "bootstrap needs replicated data (a single replicate was given)");
  BootstrapOptions bo;
  bo.resamples = c.resamples;
  bo.block_length = c.block_length;
  bo.seed = c.rng_seed;
  bo.refit.tolerance = std::max(c.fit.tolerance, 1e-5);
  const auto b = block_bootstrap(r, d, bo);
  r.std_errors = b.std_errors;
  r.clic = b.clic;
  for (const auto &n : b.notes) r.notes.push_back(n);
  write_fit(c, r);
}

/// 0 ok, 2 configuration, 3 data, 4 numerical failure.
inline int exit_code_for(ErrorKind k) {
  switch (k) {
  case ErrorKind::InvalidArgument:
  case ErrorKind::ConfigError: return 2;
  case ErrorKind::SchemaError:
  case ErrorKind::InconsistentCoordinates:
  case ErrorKind::ParseError:
  case ErrorKind::IoError:
  case ErrorKind::OutOfSupport: return 3;
  default: return 4;
  }
}

inline std::string error_json(const Error &e, std::string_view command) {
  return nlohmann::json{{"command", command}, {"error", to_string(e.kind())}, {"message", e.what()}}.dump();
}

} // namespace levyconv
