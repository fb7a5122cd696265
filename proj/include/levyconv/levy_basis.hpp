#pragma once

// Parametric Lévy seeds and the laws they induce on sets of a given volume.
//
// A seed fixes the distribution of L(A) for |A| = 1; the law for any other
// volume v has characteristic function phi(t)^v. For the five families here
// that law stays inside the family:
//
//   Gaussian(b)            -> N(0, b v)
//   Poisson(lambda)        -> Poisson(lambda v)
//   Gamma(alpha, beta)     -> Gamma(alpha v, beta)              (rate beta)
//   InverseGaussian(l, m)  -> IG(shape l v^2, mean m v)         (l/m^2 fixed)
//   NegBinomial(mu, theta) -> NB(mu v, theta v)                 (var mu + mu^2/theta)

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "levyconv/errors.hpp"
#include "levyconv/numeric.hpp"

namespace levyconv {

enum class SeedFamily { Gaussian, Poisson, Gamma, InverseGaussian, NegBinomial };

inline std::string_view to_string(SeedFamily f) {
  switch (f) {
  case SeedFamily::Gaussian: return "gaussian";
  case SeedFamily::Poisson: return "poisson";
  case SeedFamily::Gamma: return "gamma";
  case SeedFamily::InverseGaussian: return "inverse_gaussian";
  case SeedFamily::NegBinomial: return "negative_binomial";
  }
  return "unknown";
}

inline SeedFamily parse_seed_family(std::string_view name) {
  for (auto f : {SeedFamily::Gaussian, SeedFamily::Poisson, SeedFamily::Gamma,
                 SeedFamily::InverseGaussian, SeedFamily::NegBinomial})
    if (to_string(f) == name) return f;
  throw Error(ErrorKind::InvalidArgument,
              "unknown seed family '" + std::string(name) + "'");
}

/// Distribution of the basis on a unit-volume set.
class LevySeed {
public:
  static LevySeed gaussian(double variance) {
    return LevySeed(SeedFamily::Gaussian, variance, 0.0);
  }
  static LevySeed poisson(double intensity) {
    return LevySeed(SeedFamily::Poisson, intensity, 0.0);
  }
  static LevySeed gamma(double shape, double rate) {
    return LevySeed(SeedFamily::Gamma, shape, rate);
  }
  static LevySeed inverse_gaussian(double shape, double mean) {
    return LevySeed(SeedFamily::InverseGaussian, shape, mean);
  }
  static LevySeed negative_binomial(double mean, double theta) {
    return LevySeed(SeedFamily::NegBinomial, mean, theta);
  }

  /// Builds a seed from a family and its parameter vector (see parameter_names).
  static LevySeed from_parameters(SeedFamily family, const std::vector<double> &p) {
    require(p.size() == parameter_names(family).size(),
            "wrong parameter count for seed family");
    return LevySeed(family, p[0], p.size() > 1 ? p[1] : 0.0);
  }

  static std::vector<std::string> parameter_names(SeedFamily family) {
    switch (family) {
    case SeedFamily::Gaussian: return {"variance"};
    case SeedFamily::Poisson: return {"intensity"};
    case SeedFamily::Gamma: return {"shape", "rate"};
    case SeedFamily::InverseGaussian: return {"shape", "mean"};
    case SeedFamily::NegBinomial: return {"mean", "theta"};
    }
    return {};
  }

  SeedFamily family() const { return family_; }
  std::vector<double> parameters() const {
    if (parameter_names(family_).size() == 1) return {p1_};
    return {p1_, p2_};
  }

  // Family-specific accessors; meaning depends on family().
  double variance_param() const { return p1_; } // Gaussian b
  double intensity() const { return p1_; }      // Poisson lambda
  double shape() const { return p1_; }          // Gamma alpha', IG lambda
  double rate() const { return p2_; }           // Gamma beta
  double ig_mean() const { return p2_; }        // IG mu0
  double nb_mean() const { return p1_; }        // NB mu
  double nb_theta() const { return p2_; }       // NB theta

  bool is_discrete() const {
    return family_ == SeedFamily::Poisson || family_ == SeedFamily::NegBinomial;
  }
  bool is_nonnegative() const { return family_ != SeedFamily::Gaussian; }

  double mean() const;
  double variance() const;

  friend bool operator==(const LevySeed &, const LevySeed &) = default;

private:
  LevySeed(SeedFamily family, double p1, double p2)
      : family_(family), p1_(p1), p2_(p2) {
    const auto n = parameter_names(family).size();
    require(std::isfinite(p1) && p1 > 0.0,
            std::string(to_string(family)) + " seed parameters must be positive");
    if (n > 1)
      require(std::isfinite(p2) && p2 > 0.0,
              std::string(to_string(family)) + " seed parameters must be positive");
  }

  SeedFamily family_;
  double p1_;
  double p2_;
};

/// Law of L(A) for a set of hypervolume `volume`.
class SetDistribution {
public:
  SetDistribution(LevySeed seed, double volume) : seed_(seed), volume_(volume) {
    require(std::isfinite(volume) && volume >= 0.0,
            "set volume must be finite and nonnegative");
  }

  const LevySeed &seed() const { return seed_; }
  double volume() const { return volume_; }
  bool is_degenerate() const { return volume_ == 0.0; }
  bool is_discrete() const { return seed_.is_discrete(); }
  bool is_nonnegative() const { return seed_.is_nonnegative(); }

  double mean() const { return seed_.mean() * volume_; }
  double variance() const { return seed_.variance() * volume_; }

  // Parameters of the volume-scaled law.
  double gaussian_sd() const { return std::sqrt(seed_.variance_param() * volume_); }
  double poisson_mean() const { return seed_.intensity() * volume_; }
  double gamma_shape() const { return seed_.shape() * volume_; }
  double ig_shape() const { return seed_.shape() * volume_ * volume_; }
  double ig_mean() const { return seed_.ig_mean() * volume_; }
  double nb_mean() const { return seed_.nb_mean() * volume_; }
  double nb_size() const { return seed_.nb_theta() * volume_; }

  /// log density (continuous families) or log pmf (discrete families).
  double log_density(double x) const {
    if (is_degenerate()) {
      if (x == 0.0) return 0.0;
      throw Error(ErrorKind::OutOfSupport, "degenerate law is a point mass at 0");
    }
    switch (seed_.family()) {
    case SeedFamily::Gaussian: {
      const double sd = gaussian_sd();
      const double z = x / sd;
      return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * kPi);
    }
    case SeedFamily::Poisson: {
      check_count(x);
      const double m = poisson_mean();
      return x * std::log(m) - m - log_gamma(x + 1.0);
    }
    case SeedFamily::Gamma: {
      if (!(x >= 0.0) || std::isinf(x))
        throw Error(ErrorKind::OutOfSupport, "gamma law needs x >= 0");
      const double a = gamma_shape();
      const double b = seed_.rate();
      if (x == 0.0) {
        if (a < 1.0) return kInf;
        if (a == 1.0) return std::log(b);
        return -kInf;
      }
      return a * std::log(b) + (a - 1.0) * std::log(x) - b * x - log_gamma(a);
    }
    case SeedFamily::InverseGaussian: {
      if (!(x >= 0.0) || std::isinf(x))
        throw Error(ErrorKind::OutOfSupport, "inverse Gaussian law needs x >= 0");
      if (x == 0.0) return -kInf;
      const double l = ig_shape();
      const double m = ig_mean();
      return 0.5 * (std::log(l) - std::log(2.0 * kPi) - 3.0 * std::log(x)) -
             l * (x - m) * (x - m) / (2.0 * m * m * x);
    }
    case SeedFamily::NegBinomial: {
      check_count(x);
      const double r = nb_size();
      const double m = nb_mean();
      return log_gamma(x + r) - log_gamma(r) - log_gamma(x + 1.0) +
             x * std::log(m / (m + r)) + r * std::log(r / (m + r));
    }
    }
    return kNaN;
  }

  double density(double x) const {
    if (!in_support(x)) return 0.0;
    return std::exp(log_density(x));
  }

  bool in_support(double x) const {
    if (std::isnan(x)) return false;
    if (is_degenerate()) return x == 0.0;
    if (seed_.family() == SeedFamily::Gaussian) return std::isfinite(x);
    if (!(x >= 0.0) || std::isinf(x)) return false;
    if (is_discrete()) return x == std::floor(x);
    return true;
  }

  /// Power-law exponent e with density ~ x^e as x -> 0+ (gamma with shape < 1
  /// gives a negative exponent, i.e. an integrable singularity).
  double exponent_at_zero() const {
    if (seed_.family() == SeedFamily::Gamma) return gamma_shape() - 1.0;
    return 0.0;
  }

  double cdf(double x) const {
    if (std::isnan(x)) return kNaN;
    if (is_degenerate()) return x >= 0.0 ? 1.0 : 0.0;
    switch (seed_.family()) {
    case SeedFamily::Gaussian: return std_normal_cdf(x / gaussian_sd());
    case SeedFamily::Poisson:
      if (x < 0.0) return 0.0;
      if (std::isinf(x)) return 1.0;
      return gamma_q(std::floor(x) + 1.0, poisson_mean());
    case SeedFamily::Gamma:
      if (x <= 0.0) return 0.0;
      return gamma_p(gamma_shape(), seed_.rate() * x);
    case SeedFamily::InverseGaussian: return 1.0 - sf(x);
    case SeedFamily::NegBinomial: {
      if (x < 0.0) return 0.0;
      if (std::isinf(x)) return 1.0;
      const double r = nb_size();
      const double m = nb_mean();
      return incomplete_beta(r, std::floor(x) + 1.0, r / (m + r));
    }
    }
    return kNaN;
  }

  double sf(double x) const {
    if (std::isnan(x)) return kNaN;
    if (is_degenerate()) return x >= 0.0 ? 0.0 : 1.0;
    switch (seed_.family()) {
    case SeedFamily::Gaussian: return std_normal_sf(x / gaussian_sd());
    case SeedFamily::Gamma:
      if (x <= 0.0) return 1.0;
      return gamma_q(gamma_shape(), seed_.rate() * x);
    case SeedFamily::InverseGaussian: {
      if (x <= 0.0) return 1.0;
      if (std::isinf(x)) return 0.0;
      const double l = ig_shape();
      const double m = ig_mean();
      const double r = std::sqrt(l / x);
      const double a = r * (x / m - 1.0);
      const double b = r * (x / m + 1.0);
      const double second = std::exp(2.0 * l / m + log_std_normal_cdf(-b));
      return std::clamp(std_normal_sf(a) - second, 0.0, 1.0);
    }
    default: return 1.0 - cdf(x);
    }
  }

  /// Smallest x with cdf(x) >= p.
  double quantile(double p) const {
    require(p > 0.0 && p < 1.0, "quantile level must lie in (0, 1)");
    if (is_degenerate()) return 0.0;
    if (seed_.family() == SeedFamily::Gaussian)
      return gaussian_sd() * bisect([&](double z) { return std_normal_cdf(z) - p; },
                                    -40.0, 40.0, 1e-15);
    const double sd = std::sqrt(variance());
    double lo = 0.0;
    double hi = mean() + 4.0 * sd + 1.0;
    while (cdf(hi) < p) hi = 2.0 * hi + 1.0;
    if (is_discrete()) {
      // integer bisection on the cdf
      double l = -1.0; // cdf(l) < p
      double h = std::ceil(hi);
      while (h - l > 1.0) {
        const double mid = std::floor(0.5 * (l + h));
        if (cdf(mid) >= p)
          h = mid;
        else
          l = mid;
      }
      return h;
    }
    return bisect([&](double x) { return cdf(x) - p; }, lo, hi, 1e-14);
  }

  /// log phi(t) on the continuous branch through 0.
  std::complex<double> log_characteristic(double t) const {
    using namespace std::complex_literals;
    std::complex<double> unit;
    switch (seed_.family()) {
    case SeedFamily::Gaussian: unit = -0.5 * seed_.variance_param() * t * t; break;
    case SeedFamily::Poisson:
      unit = seed_.intensity() * (std::exp(1i * t) - 1.0);
      break;
    case SeedFamily::Gamma:
      unit = -seed_.shape() * std::log(1.0 - 1i * t / seed_.rate());
      break;
    case SeedFamily::InverseGaussian: {
      const double l = seed_.shape();
      const double m = seed_.ig_mean();
      unit = (l / m) * (1.0 - std::sqrt(1.0 - 2.0 * m * m * 1i * t / l));
      break;
    }
    case SeedFamily::NegBinomial: {
      const double mu = seed_.nb_mean();
      const double th = seed_.nb_theta();
      const double p = mu / (mu + th);
      unit = th * (std::log(1.0 - p) - std::log(1.0 - p * std::exp(1i * t)));
      break;
    }
    }
    return volume_ * unit;
  }

  std::complex<double> characteristic_function(double t) const {
    require(std::isfinite(t), "characteristic function needs finite t");
    return std::exp(log_characteristic(t));
  }

  template <class Rng> double sample(Rng &rng) const {
    if (is_degenerate()) return 0.0;
    switch (seed_.family()) {
    case SeedFamily::Gaussian:
      return std::normal_distribution<double>(0.0, gaussian_sd())(rng);
    case SeedFamily::Poisson: return draw_poisson(poisson_mean(), rng);
    case SeedFamily::Gamma:
      return std::gamma_distribution<double>(gamma_shape(), 1.0 / seed_.rate())(rng);
    case SeedFamily::InverseGaussian: return draw_inverse_gaussian(ig_mean(), ig_shape(), rng);
    case SeedFamily::NegBinomial: {
      const double r = nb_size();
      const double lambda =
          std::gamma_distribution<double>(r, nb_mean() / r)(rng);
      return draw_poisson(lambda, rng);
    }
    }
    return kNaN;
  }

  template <class Rng> std::vector<double> sample(Rng &rng, std::size_t n) const {
    require(n >= 1, "sample size must be >= 1");
    std::vector<double> out(n);
    for (auto &x : out) x = sample(rng);
    return out;
  }

  template <class Rng> static double draw_poisson(double mean, Rng &rng) {
    if (!(mean > 0.0)) return 0.0;
    return static_cast<double>(std::poisson_distribution<std::int64_t>(mean)(rng));
  }

  /// Michael-Schucany-Haas, with the root rearranged so tiny shapes stay exact.
  template <class Rng>
  static double draw_inverse_gaussian(double mean, double shape, Rng &rng) {
    const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
    const double c = mean * z * z / (2.0 * shape);
    const double x = mean / (1.0 + c + std::sqrt(c * c + 2.0 * c));
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return u <= mean / (mean + x) ? x : mean * mean / x;
  }

private:
  static void check_count(double x) {
    if (!(x >= 0.0) || x != std::floor(x) || std::isinf(x))
      throw Error(ErrorKind::OutOfSupport, "count law needs a nonnegative integer");
  }

  LevySeed seed_;
  double volume_;
};

inline double LevySeed::mean() const {
  switch (family_) {
  case SeedFamily::Gaussian: return 0.0;
  case SeedFamily::Poisson: return p1_;
  case SeedFamily::Gamma: return p1_ / p2_;
  case SeedFamily::InverseGaussian: return p2_;
  case SeedFamily::NegBinomial: return p1_;
  }
  return kNaN;
}

inline double LevySeed::variance() const {
  switch (family_) {
  case SeedFamily::Gaussian: return p1_;
  case SeedFamily::Poisson: return p1_;
  case SeedFamily::Gamma: return p1_ / (p2_ * p2_);
  case SeedFamily::InverseGaussian: return p2_ * p2_ * p2_ / p1_;
  case SeedFamily::NegBinomial: return p1_ + p1_ * p1_ / p2_;
  }
  return kNaN;
}

inline SetDistribution set_distribution(const LevySeed &seed, double volume) {
  return SetDistribution(seed, volume);
}

} // namespace levyconv
