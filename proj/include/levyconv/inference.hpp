#pragma once

// Composite likelihood inference for indicator-convolution fields: pairwise
// likelihoods (continuous, discrete, gamma difference), independence
// likelihoods, the empirical covariogram, multi-start simplex fitting, and
// block bootstrap standard errors with CLIC.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "levyconv/errors.hpp"
#include "levyconv/hypograph.hpp"
#include "levyconv/levy_basis.hpp"
#include "levyconv/numeric.hpp"
#include "levyconv/simulator.hpp"

namespace levyconv {

// ---------------------------------------------------------------------------
// Data and model description

/// Values are replicate-major; NaN marks a masked cell.
struct Dataset {
  SiteSet sites;
  std::size_t n_replicates = 0;
  std::vector<double> values;
  std::vector<double> covariate; // empty, or one per site

  std::size_t n_sites() const { return sites.size(); }
  double at(std::size_t r, std::size_t i) const { return values[r * n_sites() + i]; }

  void validate() const {
    sites.validate();
    require(n_sites() >= 2, "dataset needs at least two sites");
    require(n_replicates >= 1, "dataset needs at least one replicate");
    require(values.size() == n_replicates * n_sites(), "value matrix has the wrong size");
    require(covariate.empty() || covariate.size() == n_sites(), "one covariate value per site expected");
  }

  static Dataset from_sample(const FieldSample &fs) {
    return {fs.sites, fs.n_replicates, fs.values, {}};
  }

  /// Replicates listed in `rows`, in that order.
  Dataset select_replicates(const std::vector<std::size_t> &rows) const {
    Dataset d{sites, rows.size(), {}, covariate};
    d.values.reserve(rows.size() * n_sites());
    for (auto r : rows)
      d.values.insert(d.values.end(), values.begin() + static_cast<std::ptrdiff_t>(r * n_sites()),
                      values.begin() + static_cast<std::ptrdiff_t>((r + 1) * n_sites()));
    return d;
  }
};

enum class Transform { Log, Logit, Circular, Stretch };

struct Parameter {
  std::string name;
  double value;
  bool free = true;
  Transform transform = Transform::Log;
};

inline double to_working(Transform t, double v) {
  switch (t) {
  case Transform::Log: return std::log(v);
  case Transform::Logit: return std::log(v) - std::log1p(-v);
  case Transform::Circular: return v;
  case Transform::Stretch: return std::log(std::max(v - 1.0, 1e-8)); // b = 1 sits at -inf
  }
  return kNaN;
}

inline double to_natural(Transform t, double w) {
  switch (t) {
  case Transform::Log: return std::exp(w);
  case Transform::Logit: return 1.0 / (1.0 + std::exp(-w));
  case Transform::Circular: {
    double a = std::fmod(w, kPi);
    if (a < 0.0) a += kPi;
    return a >= kPi ? 0.0 : a;
  }
  case Transform::Stretch: return 1.0 + std::exp(w);
  }
  return kNaN;
}

/// Seed family, single kernel family, optional nugget and anisotropy, with
/// every parameter either free or fixed.
class ModelSpec {
public:
  ModelSpec(const LevySeed &seed, const HeightFunction &kernel, std::optional<double> nugget = std::nullopt,
            std::optional<Anisotropy> aniso = std::nullopt)
      : seed_family_(seed.family()), kernel_family_(kernel.family()) {
    require(kernel.is_simple(), "model kernel must be a single continuous family");
    const auto names = LevySeed::parameter_names(seed.family());
    const auto vals = seed.parameters();
    for (std::size_t i = 0; i < names.size(); ++i) params_.push_back({names[i], vals[i]});
    params_.push_back({"rho", kernel.rho()});
    if (kernel.family() == KernelFamily::StudentT) params_.push_back({"nu", kernel.nu(), false});
    if (nugget) {
      require(*nugget > 0.0 && *nugget < 1.0, "a free nugget weight must lie in (0, 1)");
      params_.push_back({"nugget", *nugget, true, Transform::Logit});
    }
    if (aniso) {
      params_.push_back({"angle", aniso->angle, true, Transform::Circular});
      params_.push_back({"stretch", aniso->stretch, true, Transform::Stretch});
    }
  }

  SeedFamily seed_family() const { return seed_family_; }
  KernelFamily kernel_family() const { return kernel_family_; }
  const std::vector<Parameter> &parameters() const { return params_; }

  bool has(const std::string &name) const { return find(name) != nullptr; }
  double get(const std::string &name) const {
    const auto *p = find(name);
    require(p != nullptr, "model has no parameter '" + name + "'");
    return p->value;
  }
  ModelSpec &set(const std::string &name, double v) {
    auto *p = const_cast<Parameter *>(find(name));
    require(p != nullptr, "model has no parameter '" + name + "'");
    p->value = v;
    return *this;
  }
  ModelSpec &fix(const std::string &name, bool fixed = true) {
    auto *p = const_cast<Parameter *>(find(name));
    require(p != nullptr, "model has no parameter '" + name + "'");
    p->free = !fixed;
    return *this;
  }
  /// Sets a fixed nugget weight (w may be 0); adds the parameter if absent.
  ModelSpec &fix_nugget(double w) {
    require(w >= 0.0 && w < 1.0, "nugget weight must lie in [0, 1)");
    if (!has("nugget")) params_.push_back({"nugget", w, false, Transform::Logit});
    set("nugget", w);
    return fix("nugget");
  }

  LevySeed seed() const {
    std::vector<double> v;
    for (const auto &n : LevySeed::parameter_names(seed_family_)) v.push_back(get(n));
    return LevySeed::from_parameters(seed_family_, v);
  }
  HeightFunction base_kernel() const {
    if (kernel_family_ == KernelFamily::StudentT) return HeightFunction::student_t(get("rho"), get("nu"));
    return HeightFunction::from_parameters(kernel_family_, {get("rho")});
  }
  double nugget() const { return has("nugget") ? get("nugget") : 0.0; }
  HeightFunction kernel() const { return base_kernel().with_nugget(nugget()); }
  std::optional<Anisotropy> anisotropy() const {
    if (!has("angle")) return std::nullopt;
    return Anisotropy(get("angle"), get("stretch"));
  }

  std::vector<std::string> free_names() const {
    std::vector<std::string> out;
    for (const auto &p : params_)
      if (p.free) out.push_back(p.name);
    return out;
  }
  std::vector<double> free_working() const {
    std::vector<double> out;
    for (const auto &p : params_)
      if (p.free) out.push_back(to_working(p.transform, p.value));
    return out;
  }
  ModelSpec with_free_working(const std::vector<double> &w) const {
    ModelSpec m = *this;
    std::size_t k = 0;
    for (auto &p : m.params_)
      if (p.free) p.value = to_natural(p.transform, w.at(k++));
    require(k == w.size(), "wrong number of working parameters");
    return m;
  }

private:
  const Parameter *find(const std::string &name) const {
    for (const auto &p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  SeedFamily seed_family_;
  KernelFamily kernel_family_;
  std::vector<Parameter> params_;
};

enum class LikelihoodKind { PairwiseContinuous, PairwiseDiscrete, PairwiseDifference, Independence };

inline std::string_view to_string(LikelihoodKind k) {
  switch (k) {
  case LikelihoodKind::PairwiseContinuous: return "pairwise_continuous";
  case LikelihoodKind::PairwiseDiscrete: return "pairwise_discrete";
  case LikelihoodKind::PairwiseDifference: return "pairwise_difference";
  case LikelihoodKind::Independence: return "independence";
  }
  return "unknown";
}

inline LikelihoodKind parse_likelihood_kind(std::string_view s) {
  for (auto k : {LikelihoodKind::PairwiseContinuous, LikelihoodKind::PairwiseDiscrete,
                 LikelihoodKind::PairwiseDifference, LikelihoodKind::Independence})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::InvalidArgument, "unknown likelihood kind '" + std::string(s) + "'");
}

/// Geometry of a pair at lag u with the nugget folded in.
inline PairGeometry model_pair_geometry(const ModelSpec &m, double u) {
  return pair_geometry(m.kernel(), u);
}

// ---------------------------------------------------------------------------
// Pair likelihoods

inline QuadratureSpec pair_quadrature() { return {1e-14, 1e-9, 400}; }

/// log of int f_res(x1 - y) f_res(x2 - y) f_shared(y) dy.
inline double pair_loglik_continuous(const LevySeed &seed, const PairGeometry &g, double x1, double x2,
                                     const QuadratureSpec &spec = pair_quadrature()) {
  require(!seed.is_discrete(), "continuous pair likelihood needs a continuous seed");
  require(std::isfinite(x1) && std::isfinite(x2), "observations must be finite");
  const SetDistribution full(seed, g.alpha);
  if (g.alpha0 <= 0.0) return full.log_density(x1) + full.log_density(x2);
  require(g.alpha_res > 0.0, "pair likelihood is singular when the two hypographs coincide");
  if (x1 > x2) std::swap(x1, x2);
  const SetDistribution shared(seed, g.alpha0);
  const SetDistribution res(seed, g.alpha_res);
  auto g_log = [&](double y) {
    return shared.log_density(y) + res.log_density(x1 - y) + res.log_density(x2 - y);
  };

  if (seed.family() == SeedFamily::Gaussian) {
    const double v0 = seed.variance_param() * g.alpha0;
    const double vr = seed.variance_param() * g.alpha_res;
    const double prec = 2.0 / vr + 1.0 / v0;
    const double mode = (x1 + x2) / vr / prec;
    const double sd = 1.0 / std::sqrt(prec);
    const double top = g_log(mode);
    const auto r = integrate([&](double y) { return std::exp(g_log(y) - top); }, mode - 40.0 * sd,
                             mode + 40.0 * sd, spec);
    return top + std::log(r.value);
  }

  if (x1 < 0.0) throw Error(ErrorKind::OutOfSupport, "nonnegative basis needs x >= 0");
  if (x1 == 0.0) return -kInf;
  const double lo = x1;
  const double half = 0.5 * lo;
  // power-law exponents of the integrand at both ends of [0, lo]
  const double e0 = shared.exponent_at_zero();
  const double e1 = res.exponent_at_zero() * (x1 == x2 ? 2.0 : 1.0);
  if (e1 <= -1.0)
    throw Error(ErrorKind::NonFiniteLikelihood, "pair density is infinite on the diagonal");
  double top = -kInf;
  for (int k = 0; k < 64; ++k) top = std::max(top, g_log(lo * (k + 0.5) / 64.0));
  if (!std::isfinite(top)) return top;

  // y = half * t^(1/s) on the lower piece, lo - y = half * t^(1/s) on the upper
  auto piece = [&](double expo, bool upper) {
    const double s = expo < 0.0 ? expo + 1.0 : 1.0;
    auto f = [&, s, upper](double t) {
      const double z = half * std::pow(t, 1.0 / s);
      if (z <= 0.0) return 0.0;
      // keep the small gap exact instead of forming lo - z
      double lg;
      if (upper)
        lg = shared.log_density(lo - z) + res.log_density(z) + res.log_density(x2 - x1 + z);
      else
        lg = g_log(z);
      const double jac = half / s * std::pow(t, 1.0 / s - 1.0);
      return std::exp(lg - top) * jac;
    };
    return integrate(f, 0.0, 1.0, spec).value;
  };
  const double total = piece(e0, false) + piece(e1, true);
  return top + std::log(total);
}

inline double pair_loglik_continuous(const ModelSpec &m, double x1, double x2, double u) {
  return pair_loglik_continuous(m.seed(), model_pair_geometry(m, u), x1, x2);
}

/// log pmf table of `d` at 0..kmax, built by the pmf recursion.
inline std::vector<double> log_pmf_table(const SetDistribution &d, std::size_t kmax) {
  std::vector<double> t(kmax + 1, -kInf);
  if (d.is_degenerate()) {
    t[0] = 0.0;
    return t;
  }
  const auto &s = d.seed();
  if (s.family() == SeedFamily::Poisson) {
    const double m = d.poisson_mean();
    const double lm = std::log(m);
    t[0] = -m;
    for (std::size_t k = 1; k <= kmax; ++k) t[k] = t[k - 1] + lm - std::log(static_cast<double>(k));
  } else if (s.family() == SeedFamily::NegBinomial) {
    const double r = d.nb_size();
    const double m = d.nb_mean();
    const double lp = std::log(m / (m + r));
    t[0] = r * std::log(r / (m + r));
    for (std::size_t k = 1; k <= kmax; ++k)
      t[k] = t[k - 1] + std::log((k - 1.0 + r) / static_cast<double>(k)) + lp;
  } else {
    throw Error(ErrorKind::InvalidArgument, "pmf tables need a count seed");
  }
  return t;
}

namespace detail {

inline void check_count(double k) {
  if (!(k >= 0.0) || k != std::floor(k) || std::isinf(k))
    throw Error(ErrorKind::OutOfSupport, "counts must be nonnegative integers");
}

/// log sum_y res[k1 - y] + res[k2 - y] + shared[y] over y = 0..min(k1, k2).
inline double discrete_pair_sum(const std::vector<double> &shared, const std::vector<double> &res,
                                std::size_t k1, std::size_t k2) {
  const std::size_t kmin = std::min(k1, k2);
  double top = -kInf;
  for (std::size_t y = 0; y <= kmin; ++y)
    top = std::max(top, shared[y] + res[k1 - y] + res[k2 - y]);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (std::size_t y = 0; y <= kmin; ++y) s += std::exp(shared[y] + res[k1 - y] + res[k2 - y] - top);
  return top + std::log(s);
}

} // namespace detail

inline double pair_loglik_discrete(const LevySeed &seed, const PairGeometry &g, double k1, double k2) {
  require(seed.is_discrete(), "discrete pair likelihood needs a count seed");
  detail::check_count(k1);
  detail::check_count(k2);
  const auto a = static_cast<std::size_t>(k1);
  const auto b = static_cast<std::size_t>(k2);
  const std::size_t kmax = std::max(a, b);
  if (g.alpha0 <= 0.0) {
    const auto full = log_pmf_table(SetDistribution(seed, g.alpha), kmax);
    return full[a] + full[b];
  }
  const auto shared = log_pmf_table(SetDistribution(seed, g.alpha0), kmax);
  const auto res = log_pmf_table(SetDistribution(seed, g.alpha_res), kmax);
  return detail::discrete_pair_sum(shared, res, a, b);
}

inline double pair_loglik_discrete(const ModelSpec &m, double k1, double k2, double u) {
  return pair_loglik_discrete(m.seed(), model_pair_geometry(m, u), k1, k2);
}

/// log density of A - B for A, B iid Gamma(alpha_tilde, beta).
inline double gamma_difference_logpdf(double x, double alpha_tilde, double beta) {
  require(alpha_tilde > 0.0 && beta > 0.0, "difference density needs positive parameters");
  const double ax = std::abs(x);
  const double nu = alpha_tilde - 0.5;
  if (ax == 0.0) {
    if (nu <= 0.0)
      throw Error(ErrorKind::NonFiniteLikelihood, "difference density is unbounded at 0");
    return std::log(beta) + log_gamma(nu) - log_gamma(alpha_tilde) - std::log(2.0) - 0.5 * std::log(kPi);
  }
  return 2.0 * alpha_tilde * std::log(beta) + nu * std::log(ax) + log_bessel_k(nu, beta * ax) -
         0.5 * std::log(kPi) - log_gamma(alpha_tilde) - nu * std::log(2.0 * beta);
}

inline double pair_loglik_gamma_difference(const LevySeed &seed, const PairGeometry &g, double x_diff) {
  require(seed.family() == SeedFamily::Gamma, "difference likelihood needs a gamma seed");
  require(g.alpha_res > 0.0, "difference likelihood needs a positive residual volume");
  return gamma_difference_logpdf(x_diff, seed.shape() * g.alpha_res, seed.rate());
}

inline double pair_loglik_gamma_difference(const ModelSpec &m, double x_diff, double u) {
  require(u > 0.0, "difference likelihood needs a positive lag");
  return pair_loglik_gamma_difference(m.seed(), model_pair_geometry(m, u), x_diff);
}

// ---------------------------------------------------------------------------
// Independence likelihoods

inline double independence_loglik(const LevySeed &seed, const Dataset &data) {
  data.validate();
  const SetDistribution f(seed, 1.0);
  std::vector<double> terms;
  terms.reserve(data.values.size());
  for (double x : data.values)
    if (!std::isnan(x)) terms.push_back(f.log_density(x));
  return sorted_sum(std::move(terms));
}

/// Weibull margins with log-scale linear in the site covariate.
struct WeibullMargin {
  double shape = 1.0;
  double log_scale = 0.0;
  double covariate_slope = 0.0;

  double log_density(double x, double cov) const {
    if (!(x >= 0.0) || std::isinf(x)) throw Error(ErrorKind::OutOfSupport, "Weibull needs x >= 0");
    const double ls = log_scale + covariate_slope * cov;
    if (x == 0.0) return shape < 1.0 ? kInf : (shape == 1.0 ? -ls : -kInf);
    const double z = std::log(x) - ls;
    return std::log(shape) - ls + (shape - 1.0) * z - std::exp(shape * z);
  }
};

inline double independence_loglik(const WeibullMargin &m, const Dataset &data) {
  data.validate();
  require(m.shape > 0.0, "Weibull shape must be positive");
  require(m.covariate_slope == 0.0 || !data.covariate.empty(),
          "a covariate slope needs a site covariate");
  std::vector<double> terms;
  for (std::size_t r = 0; r < data.n_replicates; ++r)
    for (std::size_t i = 0; i < data.n_sites(); ++i) {
      const double x = data.at(r, i);
      if (std::isnan(x)) continue;
      terms.push_back(m.log_density(x, data.covariate.empty() ? 0.0 : data.covariate[i]));
    }
  return sorted_sum(std::move(terms));
}

// ---------------------------------------------------------------------------
// Empirical covariogram

struct CovariogramBin {
  double lower;
  double upper;
  double mean_lag;
  double covariance;
  std::size_t count;
  bool empty;
};

/// Pairs i <= j with distance in [edge_k, edge_{k+1}); self pairs fall in a
/// bin starting at 0. Several replicates: per-site centering; one replicate:
/// global-mean centering, which biases covariances downwards.
inline std::vector<CovariogramBin> empirical_covariogram(const Dataset &data,
                                                         const std::vector<double> &edges) {
  data.validate();
  require(edges.size() >= 2, "need at least two bin edges");
  for (std::size_t k = 1; k < edges.size(); ++k) require(edges[k] > edges[k - 1], "bin edges must increase");
  const std::size_t n = data.n_sites();
  std::vector<double> centre(n, 0.0);
  if (data.n_replicates >= 2) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v;
      for (std::size_t r = 0; r < data.n_replicates; ++r)
        if (!std::isnan(data.at(r, i))) v.push_back(data.at(r, i));
      centre[i] = v.empty() ? 0.0 : sorted_sum(v) / static_cast<double>(v.size());
    }
  } else {
    std::vector<double> v;
    for (double x : data.values)
      if (!std::isnan(x)) v.push_back(x);
    std::fill(centre.begin(), centre.end(), sorted_sum(v) / static_cast<double>(v.size()));
  }
  const std::size_t nb = edges.size() - 1;
  std::vector<std::vector<double>> prods(nb), lags(nb);
  std::vector<std::size_t> counts(nb, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double d = distance(data.sites.coords[i], data.sites.coords[j]);
      const auto it = std::upper_bound(edges.begin(), edges.end(), d);
      if (it == edges.begin() || it == edges.end()) continue;
      const auto k = static_cast<std::size_t>(it - edges.begin()) - 1;
      for (std::size_t r = 0; r < data.n_replicates; ++r) {
        const double a = data.at(r, i);
        const double b = data.at(r, j);
        if (std::isnan(a) || std::isnan(b)) continue;
        prods[k].push_back((a - centre[i]) * (b - centre[j]));
        lags[k].push_back(d);
      }
      ++counts[k];
    }
  std::vector<CovariogramBin> out;
  for (std::size_t k = 0; k < nb; ++k) {
    CovariogramBin b{edges[k], edges[k + 1], kNaN, kNaN, counts[k], prods[k].empty()};
    if (!b.empty) {
      const double m = static_cast<double>(prods[k].size());
      b.covariance = sorted_sum(prods[k]) / m;
      b.mean_lag = sorted_sum(lags[k]) / m;
    }
    out.push_back(b);
  }
  return out;
}

/// Least-squares scale: argmin over a log grid of sum count (cov - s2 C(u; rho))^2.
inline double covariogram_scale(const HeightFunction &shape_family, const std::vector<CovariogramBin> &bins,
                                double variance, double lo, double hi) {
  require(lo > 0.0 && hi > lo, "scale grid needs 0 < lo < hi");
  double best = lo;
  double best_loss = kInf;
  for (int k = 0; k <= 200; ++k) {
    const double rho = lo * std::pow(hi / lo, k / 200.0);
    HeightFunction h = shape_family.family() == KernelFamily::StudentT
                           ? HeightFunction::student_t(rho, shape_family.nu())
                           : HeightFunction::from_parameters(shape_family.family(), {rho});
    double loss = 0.0;
    for (const auto &b : bins) {
      if (b.empty) continue;
      const double e = b.covariance - variance * h.correlation(b.mean_lag);
      loss += static_cast<double>(b.count) * e * e;
    }
    if (loss < best_loss) {
      best_loss = loss;
      best = rho;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Simplex search

struct SimplexResult {
  std::vector<double> x;
  double value;
  int evaluations;
  bool converged;
};

/// Minimizes f by Nelder-Mead; restarts from the best vertex until a restart
/// no longer improves. Non-finite values count as +inf.
template <class F>
SimplexResult nelder_mead(const F &f, std::vector<double> x0, double step, double tol, int max_evals) {
  const std::size_t n = x0.size();
  int evals = 0;
  auto eval = [&](const std::vector<double> &x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };
  std::vector<double> best = x0;
  double best_value = eval(x0);
  bool converged = false;
  while (evals < max_evals) {
    std::vector<std::vector<double>> pts(n + 1, best);
    std::vector<double> vals(n + 1, best_value);
    for (std::size_t i = 0; i < n; ++i) {
      pts[i + 1][i] += step;
      vals[i + 1] = eval(pts[i + 1]);
    }
    bool inner_converged = false;
    while (evals < max_evals) {
      std::vector<std::size_t> order(n + 1);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
      const auto ib = order.front();
      const auto iw = order.back();
      const auto is = order[n - 1];
      double diam = 0.0;
      for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t k = 0; k < n; ++k) diam = std::max(diam, std::abs(pts[i][k] - pts[ib][k]));
      if (diam < tol) {
        inner_converged = true;
        break;
      }
      std::vector<double> c(n, 0.0);
      for (std::size_t i = 0; i <= n; ++i)
        if (i != iw)
          for (std::size_t k = 0; k < n; ++k) c[k] += pts[i][k] / static_cast<double>(n);
      auto along = [&](double t) {
        std::vector<double> p(n);
        for (std::size_t k = 0; k < n; ++k) p[k] = c[k] + t * (pts[iw][k] - c[k]);
        return p;
      };
      auto xr = along(-1.0);
      const double fr = eval(xr);
      if (fr < vals[ib]) {
        auto xe = along(-2.0);
        const double fe = eval(xe);
        if (fe < fr) {
          pts[iw] = xe;
          vals[iw] = fe;
        } else {
          pts[iw] = xr;
          vals[iw] = fr;
        }
      } else if (fr < vals[is]) {
        pts[iw] = xr;
        vals[iw] = fr;
      } else {
        const bool outside = fr < vals[iw];
        auto xc = along(outside ? -0.5 : 0.5);
        const double fc = eval(xc);
        if (fc < (outside ? fr : vals[iw])) {
          pts[iw] = xc;
          vals[iw] = fc;
        } else {
          for (std::size_t i = 0; i <= n; ++i) {
            if (i == ib) continue;
            for (std::size_t k = 0; k < n; ++k) pts[i][k] = pts[ib][k] + 0.5 * (pts[i][k] - pts[ib][k]);
            vals[i] = eval(pts[i]);
          }
        }
      }
    }
    const auto ib = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    const bool improved = vals[ib] < best_value - 1e-9 * (1.0 + std::abs(best_value));
    if (vals[ib] < best_value) {
      best = pts[ib];
      best_value = vals[ib];
    }
    if (inner_converged && !improved) {
      converged = true;
      break;
    }
  }
  return {best, best_value, evals, converged};
}

// ---------------------------------------------------------------------------
// Composite likelihood objective

struct FitOptions {
  int n_starts = 5;
  double tolerance = 1e-6;
  int max_evaluations = 2000;
  double initial_step = 0.5;
  std::optional<double> pair_cutoff; // maximum raw distance of a pair
  std::uint64_t seed = 1;             // jitter of the extra starts
  std::vector<ModelSpec> extra_starts;
  bool use_covariogram_start = true;
};

class CompositeLikelihood {
public:
  CompositeLikelihood(const Dataset &data, LikelihoodKind kind, std::optional<double> cutoff = std::nullopt)
      : data_(&data), kind_(kind) {
    data.validate();
    const std::size_t n = data.n_sites();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = distance(data.sites.coords[i], data.sites.coords[j]);
        if (cutoff && d > *cutoff) continue;
        if (d == 0.0) continue; // coincident sites carry no pair density
        pairs_.emplace_back(i, j);
      }
    if (kind == LikelihoodKind::PairwiseDiscrete) {
      for (double x : data.values) {
        if (std::isnan(x)) continue;
        detail::check_count(x);
        kmax_ = std::max(kmax_, static_cast<std::size_t>(x));
      }
    }
  }

  LikelihoodKind kind() const { return kind_; }
  std::size_t n_pairs() const { return pairs_.size(); }

  /// Every log-likelihood term, in a fixed order.
  std::vector<double> terms(const ModelSpec &m) const {
    const Dataset &d = *data_;
    const LevySeed seed = m.seed();
    std::vector<double> out;
    if (kind_ == LikelihoodKind::Independence) {
      const SetDistribution f(seed, 1.0);
      for (double x : d.values)
        if (!std::isnan(x)) out.push_back(f.log_density(x));
      return out;
    }
    const HeightFunction kernel = m.kernel();
    const auto aniso = m.anisotropy();
    std::vector<Point2> p(d.n_sites());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = aniso ? aniso->apply(d.sites.coords[i]) : d.sites.coords[i];

    // pairs grouped by lag so per-lag work is shared
    std::vector<std::pair<double, std::size_t>> lag(pairs_.size());
    for (std::size_t k = 0; k < pairs_.size(); ++k)
      lag[k] = {distance(p[pairs_[k].first], p[pairs_[k].second]), k};
    std::sort(lag.begin(), lag.end());
    out.reserve(pairs_.size() * d.n_replicates);
    std::size_t k = 0;
    while (k < lag.size()) {
      std::size_t e = k;
      while (e < lag.size() && lag[e].first == lag[k].first) ++e;
      const PairGeometry g = pair_geometry(kernel, lag[k].first);
      switch (kind_) {
      case LikelihoodKind::PairwiseDiscrete: discrete_terms(seed, g, lag, k, e, out); break;
      case LikelihoodKind::PairwiseDifference: difference_terms(seed, g, lag, k, e, out); break;
      case LikelihoodKind::PairwiseContinuous: continuous_terms(seed, g, lag, k, e, out); break;
      default: break;
      }
      k = e;
    }
    return out;
  }

  /// Order-independent total; -inf if any term fails.
  double operator()(const ModelSpec &m) const {
    try {
      auto t = terms(m);
      for (double x : t)
        if (!std::isfinite(x)) return -kInf;
      return sorted_sum(std::move(t));
    } catch (const Error &e) {
      if (e.kind() == ErrorKind::InvalidArgument) throw;
      return -kInf;
    }
  }

private:
  using LagList = std::vector<std::pair<double, std::size_t>>;

  void discrete_terms(const LevySeed &seed, const PairGeometry &g, const LagList &lag, std::size_t b,
                      std::size_t e, std::vector<double> &out) const {
    const Dataset &d = *data_;
    if (g.alpha0 <= 0.0) {
      const auto full = log_pmf_table(SetDistribution(seed, g.alpha), kmax_);
      for (std::size_t k = b; k < e; ++k) {
        const auto [i, j] = pairs_[lag[k].second];
        for (std::size_t r = 0; r < d.n_replicates; ++r) {
          const double x = d.at(r, i), y = d.at(r, j);
          if (std::isnan(x) || std::isnan(y)) continue;
          out.push_back(full[static_cast<std::size_t>(x)] + full[static_cast<std::size_t>(y)]);
        }
      }
      return;
    }
    const auto shared = log_pmf_table(SetDistribution(seed, g.alpha0), kmax_);
    const auto res = log_pmf_table(SetDistribution(seed, g.alpha_res), kmax_);
    for (std::size_t k = b; k < e; ++k) {
      const auto [i, j] = pairs_[lag[k].second];
      for (std::size_t r = 0; r < d.n_replicates; ++r) {
        const double x = d.at(r, i), y = d.at(r, j);
        if (std::isnan(x) || std::isnan(y)) continue;
        out.push_back(detail::discrete_pair_sum(shared, res, static_cast<std::size_t>(x),
                                                static_cast<std::size_t>(y)));
      }
    }
  }

  void difference_terms(const LevySeed &seed, const PairGeometry &g, const LagList &lag, std::size_t b,
                        std::size_t e, std::vector<double> &out) const {
    require(seed.family() == SeedFamily::Gamma, "difference likelihood needs a gamma seed");
    const Dataset &d = *data_;
    const double at = seed.shape() * g.alpha_res;
    const double beta = seed.rate();
    if (!(at > 0.0)) {
      out.push_back(-kInf);
      return;
    }
    const double nu = at - 0.5;
    const double c = 2.0 * at * std::log(beta) - 0.5 * std::log(kPi) - log_gamma(at) - nu * std::log(2.0 * beta);
    for (std::size_t k = b; k < e; ++k) {
      const auto [i, j] = pairs_[lag[k].second];
      for (std::size_t r = 0; r < d.n_replicates; ++r) {
        const double x = d.at(r, i), y = d.at(r, j);
        if (std::isnan(x) || std::isnan(y)) continue;
        const double ax = std::abs(y - x);
        if (ax == 0.0)
          out.push_back(gamma_difference_logpdf(0.0, at, beta));
        else
          out.push_back(c + nu * std::log(ax) + log_bessel_k(nu, beta * ax));
      }
    }
  }

  void continuous_terms(const LevySeed &seed, const PairGeometry &g, const LagList &lag, std::size_t b,
                        std::size_t e, std::vector<double> &out) const {
    const Dataset &d = *data_;
    for (std::size_t k = b; k < e; ++k) {
      const auto [i, j] = pairs_[lag[k].second];
      for (std::size_t r = 0; r < d.n_replicates; ++r) {
        const double x = d.at(r, i), y = d.at(r, j);
        if (std::isnan(x) || std::isnan(y)) continue;
        out.push_back(pair_loglik_continuous(seed, g, std::min(x, y), std::max(x, y)));
      }
    }
  }

  const Dataset *data_;
  LikelihoodKind kind_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::size_t kmax_ = 0;
};

// ---------------------------------------------------------------------------
// Fitting

struct StartRecord {
  double start_loglik;
  double loglik;
  int evaluations;
  bool converged;
};

struct FitResult {
  ModelSpec model;               // estimates on the natural scale
  LikelihoodKind kind;
  double loglik = -kInf;
  int evaluations = 0;
  bool converged = false;
  std::vector<StartRecord> starts;
  std::vector<std::string> notes;
  std::optional<std::vector<double>> std_errors; // one per parameter, NaN for fixed ones
  std::optional<double> clic;
  std::optional<double> pair_cutoff;
};

namespace detail {

inline double pooled_mean(const Dataset &d) {
  std::vector<double> v;
  for (double x : d.values)
    if (!std::isnan(x)) v.push_back(x);
  return sorted_sum(v) / static_cast<double>(v.size());
}

inline double pooled_variance(const Dataset &d, double mean) {
  std::vector<double> v;
  for (double x : d.values)
    if (!std::isnan(x)) v.push_back((x - mean) * (x - mean));
  return sorted_sum(v) / static_cast<double>(std::max<std::size_t>(1, v.size() - 1));
}

/// Moment starting values for the free seed parameters and a covariogram scale.
inline ModelSpec moment_start(ModelSpec m, const Dataset &d, bool scale_from_covariogram) {
  const double mean = pooled_mean(d);
  const double var = std::max(pooled_variance(d, mean), 1e-12);
  auto set_free = [&](const std::string &n, double v) {
    for (const auto &p : m.parameters())
      if (p.name == n && p.free && std::isfinite(v) && v > 0.0) m.set(n, v);
  };
  switch (m.seed_family()) {
  case SeedFamily::Gaussian: set_free("variance", var); break;
  case SeedFamily::Poisson: set_free("intensity", mean); break;
  case SeedFamily::Gamma:
    set_free("shape", mean * mean / var);
    set_free("rate", mean / var);
    break;
  case SeedFamily::InverseGaussian:
    set_free("mean", mean);
    set_free("shape", mean * mean * mean / var);
    break;
  case SeedFamily::NegBinomial:
    set_free("mean", mean);
    set_free("theta", var > mean ? mean * mean / (var - mean) : 1e3);
    break;
  }
  if (scale_from_covariogram && m.has("rho")) {
    double dmin = kInf, dmax = 0.0;
    for (std::size_t i = 0; i < d.n_sites(); ++i)
      for (std::size_t j = i + 1; j < d.n_sites(); ++j) {
        const double u = distance(d.sites.coords[i], d.sites.coords[j]);
        if (u > 0.0) dmin = std::min(dmin, u);
        dmax = std::max(dmax, u);
      }
    if (std::isfinite(dmin) && dmax > 0.0) {
      std::vector<double> edges;
      for (int k = 0; k <= 15; ++k) edges.push_back(k * dmax / 15.0 * (1.0 + 1e-9));
      const auto bins = empirical_covariogram(d, edges);
      for (const auto &p : m.parameters())
        if (p.name == "rho" && p.free)
          m.set("rho", covariogram_scale(m.base_kernel(), bins, var, dmin / 10.0, dmax * 2.0));
    }
  }
  return m;
}

} // namespace detail

/// Maximizes the composite log-likelihood over the free parameters.
inline FitResult fit(const ModelSpec &model, const Dataset &data, LikelihoodKind kind,
                     const FitOptions &opts = {}) {
  data.validate();
  require(opts.n_starts >= 1 && opts.max_evaluations >= 1 && opts.tolerance > 0.0,
          "invalid fit options");
  ModelSpec base = model;
  if (kind == LikelihoodKind::Independence)
    for (const auto &p : model.parameters())
      if (p.name == "rho" || p.name == "nu" || p.name == "nugget" || p.name == "angle" || p.name == "stretch")
        base.fix(p.name);
  const CompositeLikelihood objective(data, kind, opts.pair_cutoff);
  FitResult res{base, kind, -kInf, 0, false, {}, {}, std::nullopt, std::nullopt, opts.pair_cutoff};
  if (base.free_names().empty()) {
    res.loglik = objective(base);
    res.converged = true;
    res.evaluations = 1;
    return res;
  }

  std::vector<ModelSpec> starts;
  starts.push_back(opts.use_covariogram_start ? detail::moment_start(base, data, true) : base);
  RngStream rng(opts.seed, 0x5157ULL);
  for (int s = 1; s < opts.n_starts; ++s) {
    auto w = starts.front().free_working();
    const auto names = starts.front().free_names();
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (names[k] == "angle")
        w[k] = std::fmod(w[k] + kPi * s / opts.n_starts, kPi);
      else
        w[k] += 0.5 * rng.normal();
    }
    starts.push_back(starts.front().with_free_working(w));
  }
  for (const auto &m : opts.extra_starts) starts.push_back(m);

  bool any = false;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    const double l0 = objective(starts[s]);
    if (!std::isfinite(l0)) {
      res.notes.push_back("start " + std::to_string(s) + " skipped: non-finite likelihood");
      continue;
    }
    const auto r = nelder_mead(
        [&](const std::vector<double> &w) { return -objective(starts[s].with_free_working(w)); },
        starts[s].free_working(), opts.initial_step, opts.tolerance, opts.max_evaluations);
    res.starts.push_back({l0, -r.value, r.evaluations, r.converged});
    res.evaluations += r.evaluations;
    if (!any || -r.value > res.loglik) {
      any = true;
      res.loglik = -r.value;
      res.model = starts[s].with_free_working(r.x);
      res.converged = r.converged;
    }
  }
  if (!any) throw Error(ErrorKind::AllStartsFailed, "every start had a non-finite likelihood");
  return res;
}

/// Margin-only Weibull fit by the independence likelihood.
inline std::pair<WeibullMargin, double> fit_weibull_margin(const Dataset &data, bool use_covariate,
                                                           const FitOptions &opts = {}) {
  data.validate();
  require(!use_covariate || !data.covariate.empty(), "covariate fit needs a site covariate");
  const double mean = detail::pooled_mean(data);
  std::vector<double> x0 = {0.0, std::log(mean)};
  if (use_covariate) x0.push_back(0.0);
  auto unpack = [&](const std::vector<double> &w) {
    return WeibullMargin{std::exp(w[0]), w[1], use_covariate ? w[2] : 0.0};
  };
  auto f = [&](const std::vector<double> &w) {
    try {
      return -independence_loglik(unpack(w), data);
    } catch (const Error &) {
      return kInf;
    }
  };
  const auto r = nelder_mead(f, x0, opts.initial_step, opts.tolerance, opts.max_evaluations);
  return {unpack(r.x), -r.value};
}

// ---------------------------------------------------------------------------
// Block bootstrap and CLIC

/// -Hessian of the total log-likelihood in working coordinates (central differences).
inline std::vector<std::vector<double>> observed_information(const ModelSpec &m, const CompositeLikelihood &obj,
                                                             double h = 1e-4) {
  const auto w0 = m.free_working();
  const std::size_t p = w0.size();
  auto f = [&](const std::vector<double> &w) { return obj(m.with_free_working(w)); };
  const double f0 = f(w0);
  std::vector<std::vector<double>> H(p, std::vector<double>(p, 0.0));
  for (std::size_t a = 0; a < p; ++a) {
    auto wp = w0, wm = w0;
    wp[a] += h;
    wm[a] -= h;
    H[a][a] = -(f(wp) - 2.0 * f0 + f(wm)) / (h * h);
    for (std::size_t b = a + 1; b < p; ++b) {
      auto pp = w0, pm = w0, mp = w0, mm = w0;
      pp[a] += h, pp[b] += h;
      pm[a] += h, pm[b] -= h;
      mp[a] -= h, mp[b] += h;
      mm[a] -= h, mm[b] -= h;
      H[a][b] = H[b][a] = -(f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
    }
  }
  return H;
}

/// True when the symmetric matrix admits a Cholesky factorization.
inline bool is_positive_definite(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    a[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      a[i][j] = s / a[j][j];
    }
  }
  return true;
}

inline FitOptions refit_defaults() {
  FitOptions o;
  o.n_starts = 1;
  o.tolerance = 1e-5;
  o.max_evaluations = 600;
  o.initial_step = 0.2;
  return o;
}

struct BootstrapOptions {
  int resamples = 50;
  std::size_t block_length = 1;
  std::uint64_t seed = 1;
  FitOptions refit = refit_defaults();
};

struct BootstrapResult {
  std::vector<double> std_errors;                  // natural scale, NaN for fixed parameters
  std::vector<std::vector<double>> working_draws;  // one row per resample
  std::optional<double> clic;
  std::vector<std::string> notes;
};

/// Resamples contiguous replicate blocks with replacement and refits from the
/// estimate. CLIC = -2 l(theta) + 2 tr(H V) with H the observed information of
/// the total log-likelihood and V the bootstrap covariance (working scale).
inline BootstrapResult block_bootstrap(const FitResult &fitted, const Dataset &data,
                                       const BootstrapOptions &opts = {}) {
  data.validate();
  require(opts.resamples >= 50, "bootstrap needs B >= 50 resamples");
  require(opts.block_length >= 1 && opts.block_length <= data.n_replicates,
          "block length must lie in [1, n_replicates]");
  require(data.n_replicates >= 2, "bootstrap needs replicated data");
  const ModelSpec &m = fitted.model;
  const auto w_hat = m.free_working();
  const std::size_t p = w_hat.size();
  require(p >= 1, "bootstrap needs at least one free parameter");
  const std::size_t n = data.n_replicates;
  const std::size_t L = opts.block_length;
  const std::size_t n_starts = n - L + 1;

  BootstrapResult out;
  std::vector<std::vector<double>> natural;
  for (int b = 0; b < opts.resamples; ++b) {
    RngStream rng(opts.seed, static_cast<std::uint64_t>(b));
    std::vector<std::size_t> rows;
    while (rows.size() < n) {
      const auto s = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n_starts)) % n_starts;
      for (std::size_t k = 0; k < L && rows.size() < n; ++k) rows.push_back(s + k);
    }
    const Dataset resampled = data.select_replicates(rows);
    FitOptions fo = opts.refit;
    fo.use_covariogram_start = false;
    fo.n_starts = 1;
    fo.pair_cutoff = fitted.pair_cutoff;
    fo.extra_starts.clear();
    try {
      const auto r = fit(m, resampled, fitted.kind, fo);
      out.working_draws.push_back(r.model.free_working());
      std::vector<double> nat;
      for (const auto &name : m.free_names()) nat.push_back(r.model.get(name));
      natural.push_back(nat);
    } catch (const Error &e) {
      out.notes.push_back("resample " + std::to_string(b) + " failed: " + e.what());
    }
  }
  require(out.working_draws.size() >= 2, "too few successful bootstrap refits", ErrorKind::NonConvergence);
  const double nb = static_cast<double>(out.working_draws.size());

  auto covariance = [&](const std::vector<std::vector<double>> &rows) {
    std::vector<double> mean(p, 0.0);
    for (const auto &r : rows)
      for (std::size_t a = 0; a < p; ++a) mean[a] += r[a] / nb;
    std::vector<std::vector<double>> c(p, std::vector<double>(p, 0.0));
    for (const auto &r : rows)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) c[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (nb - 1.0);
    return c;
  };

  const auto vn = covariance(natural);
  std::size_t k = 0;
  for (const auto &par : m.parameters()) {
    if (par.free)
      out.std_errors.push_back(std::sqrt(vn[k][k])), ++k;
    else
      out.std_errors.push_back(kNaN);
  }

  const CompositeLikelihood objective(data, fitted.kind, fitted.pair_cutoff);
  const auto H = observed_information(m, objective);
  if (!is_positive_definite(H)) {
    out.notes.push_back("observed information is not positive definite; CLIC omitted");
    return out;
  }
  const auto V = covariance(out.working_draws);
  double trace = 0.0;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) trace += H[a][b] * V[b][a];
  out.clic = -2.0 * objective(m) + 2.0 * trace;
  return out;
}

} // namespace levyconv
