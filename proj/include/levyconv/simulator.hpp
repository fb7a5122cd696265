#pragma once

// Simulation of X(s) = L(s + A_H) at arbitrary sites.
//
// Both methods reduce to the same column engine. The plane is cut into square
// cells; above a cell centre c a target t (a site with kernel scale k) owns the
// height k * g(|c - p_t|), where g is either the quantized height function
// (grid method) or a piecewise-constant radial step profile (disc stacking).
// Sorting the owners of a column by height splits it into horizontal blocks;
// block k is shared by the k tallest owners. Blocks with the same owner set are
// independent basis pieces, so they merge into one draw of the summed volume
// without changing the joint law.
//
// Mass that the discretization leaves out (the tail beyond the padding radius,
// the cap of a singular kernel, nugget components) is added back as a
// site-local draw so every margin keeps its exact volume.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "levyconv/errors.hpp"
#include "levyconv/hypograph.hpp"
#include "levyconv/levy_basis.hpp"
#include "levyconv/numeric.hpp"

namespace levyconv {

struct SiteSet {
  std::vector<Point2> coords;
  std::vector<double> times;         // empty, or one per site
  std::vector<std::int64_t> ids;     // empty means 0..n-1

  std::size_t size() const { return coords.size(); }
  bool has_times() const { return !times.empty(); }
  std::int64_t id(std::size_t i) const {
    return ids.empty() ? static_cast<std::int64_t>(i) : ids[i];
  }

  void validate() const {
    require(!coords.empty(), "site set is empty");
    for (const auto &p : coords)
      require(std::isfinite(p[0]) && std::isfinite(p[1]), "site coordinates must be finite");
    require(times.empty() || times.size() == coords.size(), "one time per site expected");
    for (double t : times) require(std::isfinite(t), "site times must be finite");
    require(ids.empty() || ids.size() == coords.size(), "one id per site expected");
  }

  static SiteSet line(std::size_t n, double spacing) {
    SiteSet s;
    for (std::size_t i = 0; i < n; ++i) s.coords.push_back({spacing * static_cast<double>(i), 0.0});
    return s;
  }

  static SiteSet grid(std::size_t nx, std::size_t ny, double spacing) {
    SiteSet s;
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i)
        s.coords.push_back({spacing * static_cast<double>(i), spacing * static_cast<double>(j)});
    return s;
  }
};

struct SimulationConfig {
  double grid_cell = 0.0;     // 0 selects rho / 20 of the narrowest kernel part
  double height_cell = 0.0;   // 0 selects h_max / 50 per kernel part
  double tail_mass_eps = 0.01;
  int cavalieri_layers = 64;
  std::uint64_t rng_seed = 1;
  int n_replicates = 1;
  double max_cells = 2e7;     // cap on plane cells per kernel part

  void validate() const {
    require(grid_cell >= 0.0 && std::isfinite(grid_cell), "grid_cell must be >= 0", ErrorKind::ConfigError);
    require(height_cell >= 0.0 && std::isfinite(height_cell), "height_cell must be >= 0",
            ErrorKind::ConfigError);
    require(tail_mass_eps > 0.0 && tail_mass_eps <= 0.05, "tail_mass_eps must lie in (0, 0.05]",
            ErrorKind::ConfigError);
    require(cavalieri_layers >= 1, "cavalieri_layers must be >= 1", ErrorKind::ConfigError);
    require(n_replicates >= 1, "n_replicates must be >= 1", ErrorKind::ConfigError);
    require(max_cells >= 1.0, "max_cells must be >= 1", ErrorKind::ConfigError);
  }
};

/// Values are stored replicate-major: values[r * n_sites + i].
struct FieldSample {
  SiteSet sites;
  std::size_t n_replicates = 0;
  std::vector<double> values;
  LevySeed seed;
  HeightFunction kernel;
  std::string method;

  std::size_t n_sites() const { return sites.size(); }
  double at(std::size_t r, std::size_t i) const { return values[r * n_sites() + i]; }
  std::vector<double> site_values(std::size_t i) const {
    std::vector<double> out(n_replicates);
    for (std::size_t r = 0; r < n_replicates; ++r) out[r] = at(r, i);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Temporal kernels for the separable space-time model

enum class TimeKernelFamily { Geometric, PoissonPMF, Zipf, TruncatedCustom };

class TimeKernel {
public:
  static TimeKernel geometric(double p) {
    require(p > 0.0 && p <= 1.0, "geometric time kernel needs p in (0, 1]");
    return TimeKernel(TimeKernelFamily::Geometric, p, {});
  }
  static TimeKernel poisson_pmf(double lambda) {
    require(lambda > 0.0, "poisson time kernel needs lambda > 0");
    // the pmf is nonincreasing from 0 only when lambda <= 1
    require(lambda <= 1.0, "poisson time kernel is not monotone for lambda > 1");
    return TimeKernel(TimeKernelFamily::PoissonPMF, lambda, {});
  }
  static TimeKernel zipf(double s, int i_max) {
    require(s > 0.0 && i_max >= 0, "zipf time kernel needs s > 0 and i_max >= 0");
    std::vector<double> w(static_cast<std::size_t>(i_max) + 1);
    for (int i = 0; i <= i_max; ++i) w[i] = std::pow(i + 1.0, -s);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double &x : w) x /= total;
    return TimeKernel(TimeKernelFamily::Zipf, s, w);
  }
  static TimeKernel truncated(std::vector<double> weights) {
    require(!weights.empty(), "custom time kernel needs weights");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(std::abs(total - 1.0) <= 1e-9, "time kernel weights must sum to 1");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      require(weights[i] >= 0.0, "time kernel weights must be >= 0");
      if (i > 0) require(weights[i] <= weights[i - 1], "time kernel must be nonincreasing");
    }
    return TimeKernel(TimeKernelFamily::TruncatedCustom, 0.0, std::move(weights));
  }

  TimeKernelFamily family() const { return family_; }

  /// k_T(i).
  double weight(int i) const {
    if (i < 0) return 0.0;
    switch (family_) {
    case TimeKernelFamily::Geometric: return a_ * std::pow(1.0 - a_, i);
    case TimeKernelFamily::PoissonPMF:
      return std::exp(i * std::log(a_) - a_ - log_gamma(i + 1.0));
    default: return static_cast<std::size_t>(i) < table_.size() ? table_[i] : 0.0;
    }
  }

  /// sum_{j >= delta} k_T(j), which is also the temporal correlation at lag delta.
  double survival(int delta) const {
    if (delta <= 0) return 1.0;
    switch (family_) {
    case TimeKernelFamily::Geometric: return std::pow(1.0 - a_, delta);
    case TimeKernelFamily::PoissonPMF: return gamma_p(static_cast<double>(delta), a_);
    default: {
      CompensatedSum s;
      for (std::size_t j = static_cast<std::size_t>(delta); j < table_.size(); ++j) s.add(table_[j]);
      return s.value();
    }
    }
  }

  /// Largest lag kept: smallest i with sum_{j > i} k_T(j) <= eps.
  int truncation(double eps) const {
    if (!table_.empty()) return static_cast<int>(table_.size()) - 1;
    int i = 0;
    while (survival(i + 1) > eps) ++i;
    return i;
  }

private:
  TimeKernel(TimeKernelFamily f, double a, std::vector<double> table)
      : family_(f), a_(a), table_(std::move(table)) {}

  TimeKernelFamily family_;
  double a_;
  std::vector<double> table_;
};

namespace detail {

/// Radial height profile of one kernel part, already truncated and capped.
struct Profile {
  explicit Profile(HeightFunction kernel) : h(std::move(kernel)) {}

  HeightFunction h;
  double reach = 0.0;       // zero height beyond this radius
  double cap = kInf;        // grid method: heights clipped here
  double dh = 0.0;          // grid method: vertical cell (0 for step profiles)
  std::vector<double> step_radii;
  std::vector<double> step_heights;
  double lost_mass = 0.0;   // per unit kernel scale

  double value(double r) const {
    if (r > reach) return 0.0;
    if (!step_radii.empty()) {
      const auto it = std::lower_bound(step_radii.begin(), step_radii.end(), r);
      if (it == step_radii.end()) return 0.0;
      return step_heights[static_cast<std::size_t>(it - step_radii.begin())];
    }
    return std::min(h.height(r), cap);
  }

  /// Height owned by a target of kernel scale k at distance r.
  double owned(double k, double r) const {
    const double v = k * value(r);
    if (dh <= 0.0) return v;
    const double n = std::ceil(v / dh - 0.5);
    return n > 0.0 ? n * dh : 0.0;
  }

  /// Volume lost to vertical rounding for one target on the global cell grid
  /// (centres at (k + 1/2) c). Mostly the low tail where heights round to 0.
  double rounding_deficit(double k, const Point2 &p, double c) const {
    if (dh <= 0.0) return 0.0;
    const auto lo = [&](double x) { return static_cast<std::int64_t>(std::floor((x - reach) / c)); };
    const auto hi = [&](double x) { return static_cast<std::int64_t>(std::ceil((x + reach) / c)); };
    CompensatedSum acc;
    for (auto iy = lo(p[1]); iy <= hi(p[1]); ++iy) {
      const double dy = (static_cast<double>(iy) + 0.5) * c - p[1];
      for (auto ix = lo(p[0]); ix <= hi(p[0]); ++ix) {
        const double dx = (static_cast<double>(ix) + 0.5) * c - p[0];
        const double r = std::sqrt(dx * dx + dy * dy);
        if (r > reach) continue;
        acc.add(k * value(r) - owned(k, r));
      }
    }
    return std::max(0.0, acc.value() * c * c);
  }
};

inline double padding_radius(const HeightFunction &h, double eps) {
  const double s = h.support_radius();
  if (std::isfinite(s)) return s;
  return h.radial_quantile(1.0 - eps);
}

inline Profile grid_profile(const HeightFunction &h, double eps, double height_cell, double scale) {
  Profile p{h};
  p.reach = padding_radius(h, eps);
  if (!std::isfinite(h.h_max())) {
    // cap a singular peak where the removed volume equals eps
    double lo = h.height(h.rho());
    double hi = lo;
    while (h.mass_above(hi) > eps) hi *= 4.0;
    p.cap = std::exp(bisect([&](double lq) { return eps - h.mass_above(std::exp(lq)); },
                            std::log(lo), std::log(hi), 1e-12));
  }
  p.lost_mass = h.radial_tail_mass(p.reach) + (std::isfinite(p.cap) ? h.mass_above(p.cap) : 0.0);
  const double top = std::min(h.h_max(), p.cap) * scale;
  p.dh = height_cell > 0.0 ? height_cell : top / 50.0;
  return p;
}

/// Equal-mass annuli with the mean height of H on each annulus.
inline Profile step_profile(const HeightFunction &h, int m, double eps) {
  Profile p{h};
  const double support = h.support_radius();
  const double last = std::isfinite(support) ? support : h.radial_quantile(1.0 - eps);
  double prev_r = 0.0;
  double prev_mass = 0.0;
  for (int j = 1; j <= m; ++j) {
    const double r = j < m ? h.radial_quantile(static_cast<double>(j) / m) : last;
    const double mass = j < m ? static_cast<double>(j) / m : h.radial_cdf(last);
    const double area = kPi * (r * r - prev_r * prev_r);
    if (area > 0.0 && mass > prev_mass) {
      p.step_radii.push_back(r);
      p.step_heights.push_back((mass - prev_mass) / area);
    }
    prev_r = r;
    prev_mass = std::max(prev_mass, mass);
  }
  p.reach = last;
  p.lost_mass = std::max(0.0, 1.0 - prev_mass);
  return p;
}

struct Target {
  Point2 p;
  double scale;     // kernel height multiplier
  std::size_t out;  // output column
};

/// One independent basis: a kernel part and the targets it feeds.
struct Group {
  Profile profile;
  std::vector<Target> targets;
  double cell = 0.0;
};

struct LocalEntry {
  double volume;
  std::size_t out;
};

class ColumnEngine {
public:
  ColumnEngine(LevySeed seed, std::vector<Group> groups,
               std::map<std::tuple<std::size_t, double, double>, std::vector<LocalEntry>> local,
               std::size_t n_out, double max_cells)
      : seed_(seed), groups_(std::move(groups)), n_out_(n_out) {
    for (auto &[key, entries] : local) {
      std::stable_sort(entries.begin(), entries.end(),
                       [](const LocalEntry &a, const LocalEntry &b) { return a.volume > b.volume; });
      local_.push_back(std::move(entries));
    }
    blocks_.resize(groups_.size());
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const auto &grp = groups_[g];
      if (grp.targets.empty()) continue;
      const auto extent = bounds(grp);
      const double cells = static_cast<double>(extent.nx) * static_cast<double>(extent.ny);
      if (cells > max_cells)
        throw Error(ErrorKind::BudgetExceeded,
                    "simulation grid needs " + std::to_string(cells) + " cells");
      if (grp.targets.size() <= 64) aggregate(g);
    }
  }

  void simulate_replicate(RngStream &rng, double *out) const {
    std::fill(out, out + n_out_, 0.0);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      const auto &grp = groups_[g];
      if (grp.targets.empty()) continue;
      if (grp.targets.size() <= 64) {
        for (const auto &[mask, dist] : blocks_[g]) {
          const double v = dist.sample(rng);
          for (std::uint64_t m = mask; m != 0; m &= m - 1)
            out[grp.targets[static_cast<std::size_t>(std::countr_zero(m))].out] += v;
        }
      } else {
        stream(grp, rng, out);
      }
    }
    for (const auto &entries : local_) draw_nested(entries, rng, out);
  }

private:
  struct Extent {
    double x0, y0;
    std::int64_t nx, ny;
  };

  static Extent bounds(const Group &grp) {
    double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
    for (const auto &t : grp.targets) {
      xmin = std::min(xmin, t.p[0]);
      xmax = std::max(xmax, t.p[0]);
      ymin = std::min(ymin, t.p[1]);
      ymax = std::max(ymax, t.p[1]);
    }
    const double c = grp.cell;
    const double r = grp.profile.reach;
    Extent e;
    e.x0 = std::floor((xmin - r) / c) * c;
    e.y0 = std::floor((ymin - r) / c) * c;
    e.nx = static_cast<std::int64_t>(std::ceil((xmax + r - e.x0) / c)) + 1;
    e.ny = static_cast<std::int64_t>(std::ceil((ymax + r - e.y0) / c)) + 1;
    return e;
  }

  /// Calls f(owners) for every column, owners sorted by height descending.
  template <class F> static void for_each_column(const Group &grp, F &&f) {
    const auto e = bounds(grp);
    const double c = grp.cell;
    const double reach2 = grp.profile.reach * grp.profile.reach;
    std::vector<std::pair<double, std::size_t>> owners;
    std::vector<std::size_t> row;
    for (std::int64_t iy = 0; iy < e.ny; ++iy) {
      const double cy = e.y0 + (static_cast<double>(iy) + 0.5) * c;
      row.clear();
      for (std::size_t t = 0; t < grp.targets.size(); ++t) {
        const double dy = cy - grp.targets[t].p[1];
        if (dy * dy <= reach2) row.push_back(t);
      }
      if (row.empty()) continue;
      for (std::int64_t ix = 0; ix < e.nx; ++ix) {
        const double cx = e.x0 + (static_cast<double>(ix) + 0.5) * c;
        owners.clear();
        for (std::size_t t : row) {
          const auto &tg = grp.targets[t];
          const double dx = cx - tg.p[0];
          const double dy = cy - tg.p[1];
          const double d2 = dx * dx + dy * dy;
          if (d2 > reach2) continue;
          const double h = grp.profile.owned(tg.scale, std::sqrt(d2));
          if (h > 0.0) owners.emplace_back(h, t);
        }
        if (owners.empty()) continue;
        std::sort(owners.begin(), owners.end(), [](const auto &a, const auto &b) {
          return a.first > b.first || (a.first == b.first && a.second < b.second);
        });
        f(owners);
      }
    }
  }

  void aggregate(std::size_t g) {
    const auto &grp = groups_[g];
    const double area = grp.cell * grp.cell;
    std::unordered_map<std::uint64_t, CompensatedSum> vol;
    for_each_column(grp, [&](const std::vector<std::pair<double, std::size_t>> &owners) {
      std::uint64_t mask = 0;
      for (std::size_t k = 0; k < owners.size(); ++k) {
        mask |= std::uint64_t{1} << owners[k].second;
        const double next = k + 1 < owners.size() ? owners[k + 1].first : 0.0;
        if (owners[k].first > next) vol[mask].add(area * (owners[k].first - next));
      }
    });
    std::vector<std::uint64_t> keys;
    keys.reserve(vol.size());
    for (const auto &kv : vol) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    for (auto k : keys) blocks_[g].emplace_back(k, SetDistribution(seed_, vol[k].value()));
  }

  void stream(const Group &grp, RngStream &rng, double *out) const {
    const double area = grp.cell * grp.cell;
    std::vector<double> level;
    for_each_column(grp, [&](const std::vector<std::pair<double, std::size_t>> &owners) {
      level.assign(owners.size(), 0.0);
      for (std::size_t k = 0; k < owners.size(); ++k) {
        const double next = k + 1 < owners.size() ? owners[k + 1].first : 0.0;
        if (owners[k].first > next)
          level[k] = SetDistribution(seed_, area * (owners[k].first - next)).sample(rng);
      }
      // target at rank j collects levels j, j+1, ...
      double acc = 0.0;
      for (std::size_t k = owners.size(); k-- > 0;) {
        acc += level[k];
        out[grp.targets[owners[k].second].out] += acc;
      }
    });
  }

  void draw_nested(const std::vector<LocalEntry> &entries, RngStream &rng, double *out) const {
    double acc = 0.0;
    std::vector<double> level(entries.size(), 0.0);
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const double next = k + 1 < entries.size() ? entries[k + 1].volume : 0.0;
      if (entries[k].volume > next)
        level[k] = SetDistribution(seed_, entries[k].volume - next).sample(rng);
    }
    for (std::size_t k = entries.size(); k-- > 0;) {
      acc += level[k];
      out[entries[k].out] += acc;
    }
  }

  LevySeed seed_;
  std::vector<Group> groups_;
  std::size_t n_out_;
  std::vector<std::vector<std::pair<std::uint64_t, SetDistribution>>> blocks_;
  std::vector<std::vector<LocalEntry>> local_;
};

/// A target request before it is split across kernel parts.
struct Request {
  Point2 p;
  double scale;
  std::size_t out;
  std::size_t basis;  // targets with different basis ids never share cells
};

enum class Method { Grid, Cavalieri };

inline FieldSample run(const LevySeed &seed, const HeightFunction &kernel, const SiteSet &sites,
                       const std::vector<Request> &requests, std::size_t n_bases,
                       const SimulationConfig &cfg, Method method, double extra_local_per_scale,
                       std::string tag) {
  cfg.validate();
  sites.validate();
  std::vector<double> weights;
  std::vector<HeightFunction> parts;
  if (kernel.family() == KernelFamily::ConvexSum) {
    weights = kernel.weights();
    parts = kernel.parts();
  } else {
    weights = {1.0};
    parts = {kernel};
  }
  double min_rho = kInf;
  for (const auto &p : parts)
    if (!p.is_nugget()) min_rho = std::min(min_rho, p.rho());
  const double cell = cfg.grid_cell > 0.0 ? cfg.grid_cell : min_rho / 20.0;
  double max_scale = 0.0;
  for (const auto &r : requests) max_scale = std::max(max_scale, r.scale);

  std::vector<Group> groups;
  std::map<std::tuple<std::size_t, double, double>, std::vector<LocalEntry>> local_raw;
  // accumulate local volume per (basis, location, output)
  std::map<std::tuple<std::size_t, double, double, std::size_t>, double> local_vol;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    if (parts[i].is_nugget()) {
      for (const auto &r : requests) local_vol[{r.basis, r.p[0], r.p[1], r.out}] += w * r.scale;
      continue;
    }
    Profile prof = method == Method::Grid
                       ? grid_profile(parts[i], cfg.tail_mass_eps, cfg.height_cell, w * max_scale)
                       : step_profile(parts[i], cfg.cavalieri_layers, cfg.tail_mass_eps);
    std::vector<Group> by_basis(n_bases, Group{prof, {}, cell});
    for (const auto &r : requests) {
      by_basis[r.basis].targets.push_back({r.p, w * r.scale, r.out});
      double local = w * r.scale * prof.lost_mass;
      if (method == Method::Grid) local += prof.rounding_deficit(w * r.scale, r.p, cell);
      if (local > 0.0) local_vol[{r.basis, r.p[0], r.p[1], r.out}] += local;
    }
    for (auto &g : by_basis) groups.push_back(std::move(g));
  }
  if (extra_local_per_scale > 0.0) {
    // once per output, keyed on its first request so co-located outputs share it
    std::vector<bool> seen(sites.size(), false);
    for (const auto &r : requests) {
      if (seen[r.out]) continue;
      seen[r.out] = true;
      local_vol[{r.basis, r.p[0], r.p[1], r.out}] += extra_local_per_scale;
    }
  }
  for (const auto &[key, v] : local_vol) {
    const auto &[b, x, y, out] = key;
    if (v > 0.0) local_raw[{b, x, y}].push_back({v, out});
  }

  const ColumnEngine engine(seed, std::move(groups), std::move(local_raw), sites.size(), cfg.max_cells);
  FieldSample fs{sites, static_cast<std::size_t>(cfg.n_replicates), {}, seed, kernel, std::move(tag)};
  fs.values.assign(fs.n_replicates * sites.size(), 0.0);
  for (std::size_t r = 0; r < fs.n_replicates; ++r) {
    RngStream rng(cfg.rng_seed, r);
    engine.simulate_replicate(rng, fs.values.data() + r * sites.size());
  }
  return fs;
}

inline std::vector<Request> plain_requests(const SiteSet &sites, const std::optional<Anisotropy> &aniso) {
  std::vector<Request> req;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const Point2 p = aniso ? aniso->apply(sites.coords[i]) : sites.coords[i];
    req.push_back({p, 1.0, i, 0});
  }
  return req;
}

} // namespace detail

/// Fine-grid discretization of the (d+1)-dimensional basis.
inline FieldSample simulate_grid(const LevySeed &seed, const HeightFunction &h, const SiteSet &sites,
                                 const SimulationConfig &cfg,
                                 const std::optional<Anisotropy> &aniso = std::nullopt) {
  sites.validate();
  return detail::run(seed, h, sites, detail::plain_requests(sites, aniso), 1, cfg,
                     detail::Method::Grid, 0.0, "grid");
}

/// Disc stacking with cfg.cavalieri_layers equal-mass layers.
inline FieldSample simulate_cavalieri(const LevySeed &seed, const HeightFunction &h,
                                      const SiteSet &sites, const SimulationConfig &cfg,
                                      const std::optional<Anisotropy> &aniso = std::nullopt) {
  require(h.is_simple(), "disc stacking needs a single radial kernel");
  sites.validate();
  return detail::run(seed, h, sites, detail::plain_requests(sites, aniso), 1, cfg,
                     detail::Method::Cavalieri, 0.0, "cavalieri");
}

/// Transport model: one basis seen through the hypograph at s - v t, so the
/// pattern travels with velocity v and corr(X(0, 0), X(s, t)) = C(|s - v t|).
inline FieldSample simulate_spacetime_transport(const LevySeed &seed, const HeightFunction &h,
                                                const SiteSet &sites, const Point2 &velocity,
                                                const SimulationConfig &cfg,
                                                const std::optional<Anisotropy> &aniso = std::nullopt) {
  sites.validate();
  require(sites.has_times(), "transport model needs a time per site");
  auto req = detail::plain_requests(sites, aniso);
  for (std::size_t i = 0; i < req.size(); ++i) {
    Point2 shifted = {sites.coords[i][0] - velocity[0] * sites.times[i],
                      sites.coords[i][1] - velocity[1] * sites.times[i]};
    req[i].p = aniso ? aniso->apply(shifted) : shifted;
  }
  return detail::run(seed, h, sites, req, 1, cfg, detail::Method::Grid, 0.0, "transport");
}

/// X(s, t) = sum_i eps_{t-i, i}(s), innovations with kernels k_T(i) H on
/// independent bases per innovation time. Output sites are (s, t) for
/// t = 0..n_times-1, ordered time-major.
inline FieldSample simulate_spacetime_separable(const LevySeed &seed, const HeightFunction &h,
                                                const SiteSet &sites, int n_times,
                                                const TimeKernel &kt, const SimulationConfig &cfg) {
  sites.validate();
  cfg.validate();
  require(n_times >= 1, "need at least one time step");
  const int imax = kt.truncation(cfg.tail_mass_eps);
  SiteSet out;
  for (int t = 0; t < n_times; ++t)
    for (std::size_t i = 0; i < sites.size(); ++i) {
      out.coords.push_back(sites.coords[i]);
      out.times.push_back(t);
    }
  // innovation time t' = t - lag runs over -imax .. n_times-1
  std::vector<detail::Request> req;
  const std::size_t n = sites.size();
  for (int t = 0; t < n_times; ++t)
    for (int lag = 0; lag <= imax; ++lag) {
      const double k = kt.weight(lag);
      if (k <= 0.0) continue;
      const auto basis = static_cast<std::size_t>(t - lag + imax);
      for (std::size_t i = 0; i < n; ++i)
        req.push_back({sites.coords[i], k, static_cast<std::size_t>(t) * n + i, basis});
    }
  // truncated innovations are folded into a site-local draw
  const double lost = kt.survival(imax + 1);
  auto fs = detail::run(seed, h, out, req, static_cast<std::size_t>(n_times + imax), cfg,
                        detail::Method::Grid, lost, "separable");
  return fs;
}

enum class LatentLink { ExponentialRate, PoissonMean };

/// Gamma field G(s) by the grid method, then conditionally independent
/// Exp(rate G(s)) or Poisson(G(s)) observations.
inline FieldSample simulate_latent(const LevySeed &latent_seed, const HeightFunction &h,
                                   const SiteSet &sites, LatentLink link,
                                   const SimulationConfig &cfg,
                                   const std::optional<Anisotropy> &aniso = std::nullopt) {
  require(latent_seed.family() == SeedFamily::Gamma, "latent field must have a gamma seed");
  auto fs = simulate_grid(latent_seed, h, sites, cfg, aniso);
  for (std::size_t r = 0; r < fs.n_replicates; ++r) {
    RngStream rng(splitmix64(cfg.rng_seed ^ 0x5bd1e995ULL), r);
    for (std::size_t i = 0; i < fs.n_sites(); ++i) {
      double &x = fs.values[r * fs.n_sites() + i];
      if (link == LatentLink::PoissonMean) {
        x = SetDistribution::draw_poisson(x, rng);
      } else {
        const double rate = std::max(x, std::numeric_limits<double>::min());
        x = std::exponential_distribution<double>(rate)(rng);
      }
    }
  }
  fs.method = link == LatentLink::PoissonMean ? "latent_poisson" : "latent_exponential";
  return fs;
}

/// n draws of (X1, X2) at a given pair geometry, replicate i on stream i.
inline std::vector<std::pair<double, double>> simulate_pairs(const LevySeed &seed,
                                                             const PairGeometry &g, std::size_t n,
                                                             std::uint64_t rng_seed) {
  require(n >= 1, "need at least one pair");
  std::vector<std::pair<double, double>> out(n);
  RngStream rng(rng_seed, 0);
  for (auto &p : out) p = sample_pair(seed, g, rng);
  return out;
}

} // namespace levyconv
