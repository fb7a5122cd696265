#pragma once

// Extremal dependence of indicator-convolution pairs: theoretical chi / chibar
// by tail class, the gamma conditional-exceedance asymptote, the convolution
// asymptote for exponential-type tails, and rank-based empirical estimators.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "levyconv/errors.hpp"
#include "levyconv/hypograph.hpp"
#include "levyconv/levy_basis.hpp"
#include "levyconv/numeric.hpp"

namespace levyconv {

enum class TailKind { Subexponential, GammaTailed, ConvolutionEquivalent };

struct TailClass {
  TailKind kind = TailKind::Subexponential;
  double beta = 0.0;            // exponential rate (gamma / convolution-equivalent)
  double alpha_prime = 0.0;     // gamma shape per unit volume
  double seed_mgf_at_beta = 1.0; // m_{L'}(beta), convolution-equivalent only
  std::optional<LevySeed> seed; // needed to integrate the residual minimum

  static TailClass subexponential() { return {}; }

  static TailClass for_seed(const LevySeed &s) {
    TailClass tc;
    tc.seed = s;
    switch (s.family()) {
    case SeedFamily::Gamma:
      tc.kind = TailKind::GammaTailed;
      tc.beta = s.rate();
      tc.alpha_prime = s.shape();
      return tc;
    case SeedFamily::InverseGaussian:
      tc.kind = TailKind::ConvolutionEquivalent;
      tc.beta = s.shape() / (2.0 * s.ig_mean() * s.ig_mean());
      tc.seed_mgf_at_beta = std::exp(s.shape() / s.ig_mean());
      return tc;
    default:
      throw Error(ErrorKind::InvalidArgument,
                  "no tail class is declared for the " + std::string(to_string(s.family())) +
                      " seed");
    }
  }
};

/// chibar = 2 eta - 1.
struct TailSummary {
  double chi = 0.0;
  double chibar = 0.0;
  double eta = 0.5;
};

inline TailSummary make_tail_summary(double chi, double chibar) {
  return {chi, chibar, 0.5 * (chibar + 1.0)};
}

/// E exp(beta * min(A, B)) for A, B iid with law `res`, written as
/// 1 + beta * int_0^inf e^{beta x} Fbar(x)^2 dx.
inline double residual_min_mgf(const SetDistribution &res, double beta,
                               const QuadratureSpec &spec = {1e-12, 1e-10, 1000}) {
  require(beta > 0.0, "beta must be positive");
  if (res.is_degenerate()) return 1.0;
  require(res.is_nonnegative(), "residual minimum needs a nonnegative law");
  auto integrand = [&](double x) {
    const double s = res.sf(x);
    if (s <= 0.0) return 0.0;
    return std::exp(beta * x + 2.0 * std::log(s));
  };
  try {
    return 1.0 + beta * integrate(integrand, 0.0, kInf, spec).value;
  } catch (const Error &e) {
    if (e.kind() != ErrorKind::NonConvergence) throw;
  }
  // Monte Carlo fallback
  RngStream rng(0x6d7469ULL, 0);
  CompensatedSum acc;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) acc.add(std::exp(beta * std::min(res.sample(rng), res.sample(rng))));
  const double v = acc.value() / n;
  if (!std::isfinite(v)) throw Error(ErrorKind::DivergentMoment, "residual minimum mgf diverges");
  return v;
}

inline TailSummary theoretical_chi(const TailClass &tc, const PairGeometry &g) {
  require(g.alpha0 <= g.alpha * (1.0 + 1e-12), "alpha0 cannot exceed alpha");
  require(g.alpha0 >= 0.0 && g.alpha_res >= 0.0, "pair volumes must be nonnegative");
  if (g.alpha0 <= 0.0) return make_tail_summary(0.0, 0.0);
  if (g.alpha_res <= 0.0) return make_tail_summary(1.0, 1.0);
  const double ratio = std::min(1.0, g.alpha0 / g.alpha);
  switch (tc.kind) {
  case TailKind::Subexponential: return make_tail_summary(ratio, 1.0);
  case TailKind::GammaTailed: return make_tail_summary(0.0, 1.0);
  case TailKind::ConvolutionEquivalent: {
    require(tc.seed.has_value(), "convolution-equivalent class needs its seed");
    const double mt = residual_min_mgf(g.residual(*tc.seed), tc.beta);
    const double chi = ratio * mt * std::pow(tc.seed_mgf_at_beta, -g.alpha_res);
    return make_tail_summary(std::clamp(chi, 0.0, 1.0), 1.0);
  }
  }
  return {};
}

/// pr(X2 > x | X1 > x) ~ m~ Gamma(a) / Gamma(a0) (beta x)^(-a_res), shapes
/// a = alpha' alpha, a0 = alpha' alpha0, a_res = alpha' alpha_res.
inline double gamma_conditional_asymptote(double alpha_prime, double beta, const PairGeometry &g,
                                          double x) {
  require(alpha_prime > 0.0 && beta > 0.0, "gamma parameters must be positive");
  require(x > 0.0, "threshold must be positive");
  if (g.alpha_res <= 0.0) return 1.0;
  require(g.alpha0 > 0.0, "asymptote needs a shared volume alpha0 > 0");
  const auto seed = LevySeed::gamma(alpha_prime, beta);
  const double mt = residual_min_mgf(g.residual(seed), beta);
  const double a = alpha_prime * g.alpha;
  const double a0 = alpha_prime * g.alpha0;
  const double ar = alpha_prime * g.alpha_res;
  return mt * std::exp(log_gamma(a) - log_gamma(a0) - ar * std::log(beta * x));
}

/// Tail Fbar(x) ~ ell * x^(shape - 1) * exp(-rate x).
struct ExpTypeTail {
  double shape;
  double rate;
  double ell;

  static ExpTypeTail gamma(double shape, double rate) {
    require(shape > 0.0 && rate > 0.0, "gamma tail needs positive parameters");
    return {shape, rate, std::exp((shape - 1.0) * std::log(rate) - log_gamma(shape))};
  }
};

inline double convolution_tail_asymptote(const ExpTypeTail &f1, const ExpTypeTail &f2, double x) {
  require(f1.rate == f2.rate, "convolution asymptote needs a common rate");
  require(f1.shape > 0.0 && f2.shape > 0.0, "shapes must be positive");
  const double b = f1.rate;
  const double a = f1.shape + f2.shape;
  return std::exp(std::log(b) + log_gamma(f1.shape) + log_gamma(f2.shape) - log_gamma(a) +
                  std::log(f1.ell) + std::log(f2.ell) + (a - 1.0) * std::log(x) - b * x);
}

struct EmpiricalChi {
  double q;
  double chi;
  double chibar;
  double chi_se;
  double chibar_se;
  std::size_t joint_exceedances;
};

namespace detail {

/// Average ranks scaled to (0, 1]: rank / n.
inline std::vector<double> scaled_ranks(const std::vector<double> &x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) u[idx[k]] = r / static_cast<double>(n);
    i = j + 1;
  }
  return u;
}

} // namespace detail

inline EmpiricalChi empirical_chi(const std::vector<std::pair<double, double>> &pairs, double q) {
  require(pairs.size() >= 500, "empirical chi needs at least 500 pairs");
  require(q > 0.5 && q < 1.0, "threshold level must lie in (0.5, 1)");
  std::vector<double> a(pairs.size()), b(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    a[i] = pairs[i].first;
    b[i] = pairs[i].second;
  }
  const auto ua = detail::scaled_ranks(a);
  const auto ub = detail::scaled_ranks(b);
  std::size_t joint = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (ua[i] > q && ub[i] > q) ++joint;
  if (joint == 0) throw Error(ErrorKind::DegenerateTail, "no joint exceedances at this level");
  const double n = static_cast<double>(pairs.size());
  const double p = static_cast<double>(joint) / n;
  const double se_p = std::sqrt(p * (1.0 - p) / n);
  const double lq = std::log(1.0 - q);
  const double lp = std::log(p);
  EmpiricalChi out;
  out.q = q;
  out.chi = p / (1.0 - q);
  out.chi_se = se_p / (1.0 - q);
  out.chibar = lp == 0.0 ? 1.0 : 2.0 * lq / lp - 1.0;
  out.chibar_se = lp == 0.0 ? 0.0 : std::abs(2.0 * lq / (p * lp * lp)) * se_p;
  out.joint_exceedances = joint;
  return out;
}

} // namespace levyconv
