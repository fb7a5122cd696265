#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "levyconv/levy_basis.hpp"

using namespace levyconv;

namespace {

std::vector<LevySeed> all_seeds() {
  return {LevySeed::gaussian(1.7), LevySeed::poisson(3.5), LevySeed::gamma(2.0, 1.5),
          LevySeed::inverse_gaussian(2.0, 1.3), LevySeed::negative_binomial(4.0, 1.5)};
}

// two-sample KS statistic
double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

} // namespace

TEST(SetDistribution, FamilyParameters) {
  const auto g = set_distribution(LevySeed::gamma(2.0, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(g.gamma_shape(), 6.0);
  const auto nb = set_distribution(LevySeed::negative_binomial(2.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(nb.nb_mean(), 4.0);
  EXPECT_DOUBLE_EQ(nb.nb_size(), 2.0);
  const auto ig = set_distribution(LevySeed::inverse_gaussian(2.0, 1.5), 2.0);
  EXPECT_DOUBLE_EQ(ig.ig_mean(), 3.0);
  // lambda / mu^2 is invariant in the volume
  EXPECT_NEAR(ig.ig_shape() / (ig.ig_mean() * ig.ig_mean()), 2.0 / (1.5 * 1.5), 1e-14);
  EXPECT_THROW(set_distribution(LevySeed::gamma(1.0, 1.0), -1.0), Error);
}

TEST(SetDistribution, ZeroVolumeIsPointMass) {
  for (const auto &s : all_seeds()) {
    const auto d = set_distribution(s, 0.0);
    EXPECT_TRUE(d.is_degenerate());
    EXPECT_EQ(d.cdf(0.0), 1.0);
    EXPECT_EQ(d.cdf(-1e-9), 0.0);
    RngStream rng(1, 0);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(d.sample(rng), 0.0);
  }
}

TEST(SetDistribution, LogDensityValues) {
  EXPECT_NEAR(set_distribution(LevySeed::gamma(1.0, 1.0), 1.0).log_density(0.5), -0.5, 1e-14);
  EXPECT_NEAR(set_distribution(LevySeed::poisson(2.0), 1.0).log_density(0.0), -2.0, 1e-14);
  EXPECT_THROW(set_distribution(LevySeed::gamma(1.0, 1.0), 1.0).log_density(-0.1), Error);
  EXPECT_THROW(set_distribution(LevySeed::poisson(1.0), 1.0).log_density(1.5), Error);
}

TEST(SetDistribution, NegBinomialIsGammaPoissonMixture) {
  const auto d = set_distribution(LevySeed::negative_binomial(3.0, 0.8), 1.5);
  const double r = d.nb_size(), m = d.nb_mean();
  for (int k : {0, 1, 4, 11}) {
    // Poisson(lambda) mixed over Gamma(r, rate r / m)
    auto f = [&](double lam) {
      if (lam <= 0.0) return 0.0;
      return std::exp(k * std::log(lam) - lam - std::lgamma(k + 1.0) + r * std::log(r / m) +
                      (r - 1.0) * std::log(lam) - r / m * lam - std::lgamma(r));
    };
    const double mix = integrate(f, 0.0, kInf, {1e-14, 1e-11, 500}).value;
    EXPECT_NEAR(d.density(k) / mix, 1.0, 1e-8) << k;
  }
}

TEST(SetDistribution, DensityNormalizes) {
  for (const auto &s : all_seeds()) {
    const auto d = set_distribution(s, 0.7);
    double total = 0.0;
    if (s.is_discrete()) {
      for (int k = 0; k < 2000; ++k) total += d.density(k);
    } else {
      const double lo = s.is_nonnegative() ? 0.0 : -kInf;
      total = integrate([&](double x) { return d.in_support(x) && x != 0.0 ? d.density(x) : 0.0; }, lo, kInf,
                        {1e-13, 1e-11, 800})
                  .value;
    }
    EXPECT_NEAR(total, 1.0, 1e-8) << to_string(s.family());
  }
}

TEST(SetDistribution, CdfQuantileRoundTrip) {
  for (const auto &s : all_seeds()) {
    const auto d = set_distribution(s, 1.3);
    for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) {
      const double q = d.quantile(p);
      if (s.is_discrete()) {
        EXPECT_GE(d.cdf(q), p - 1e-12);
        if (q > 0) {
          EXPECT_LT(d.cdf(q - 1.0), p);
        }
      } else {
        EXPECT_NEAR(d.cdf(q), p, 1e-9) << to_string(s.family());
      }
      EXPECT_NEAR(d.cdf(q) + d.sf(q), 1.0, 1e-12);
    }
  }
}

TEST(CharacteristicFunction, Properties) {
  for (const auto &s : all_seeds()) {
    const auto one = set_distribution(s, 1.0);
    const auto two = set_distribution(s, 2.3);
    EXPECT_NEAR(std::abs(one.characteristic_function(0.0) - std::complex<double>(1.0, 0.0)), 0.0, 1e-15);
    for (double t = -6.0; t <= 6.0; t += 0.25) {
      const auto phi = one.characteristic_function(t);
      EXPECT_LE(std::abs(phi), 1.0 + 1e-12);
      // infinite divisibility: phi_alpha = phi_1^alpha along the principal branch
      const auto lhs = two.characteristic_function(t);
      const auto rhs = std::exp(2.3 * one.log_characteristic(t));
      EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-10) << to_string(s.family()) << " " << t;
    }
  }
}

TEST(CharacteristicFunction, ClosedForms) {
  const double t = 0.9;
  const std::complex<double> i(0.0, 1.0);
  // NB with p = mu / (mu + theta)
  const auto nb = set_distribution(LevySeed::negative_binomial(2.0, 1.5), 1.4);
  const double p = 2.0 / 3.5;
  const auto ref = std::pow((1.0 - p) / (1.0 - p * std::exp(i * t)), 1.5 * 1.4);
  EXPECT_NEAR(std::abs(nb.characteristic_function(t) - ref), 0.0, 1e-12);
  // IG with mean mu0 |A| and shape lambda |A|^2
  const auto ig = set_distribution(LevySeed::inverse_gaussian(2.0, 1.5), 1.4);
  const double lam = 2.0 * 1.4 * 1.4, mu = 1.5 * 1.4;
  const auto ig_ref = std::exp(lam / mu * (1.0 - std::sqrt(1.0 - 2.0 * mu * mu * i * t / lam)));
  EXPECT_NEAR(std::abs(ig.characteristic_function(t) - ig_ref), 0.0, 1e-12);
  const auto g = set_distribution(LevySeed::gamma(2.0, 1.0), 1.0);
  EXPECT_NEAR(std::abs(g.characteristic_function(0.0) - 1.0), 0.0, 1e-15);
}

TEST(Sampling, MomentsMatch) {
  const int n = 100000;
  for (const auto &s : all_seeds()) {
    const auto d = set_distribution(s, 1.7);
    RngStream rng(21, 0);
    const auto x = d.sample(rng, n);
    double m = 0.0, v = 0.0;
    for (double y : x) m += y;
    m /= n;
    for (double y : x) v += (y - m) * (y - m);
    v /= (n - 1);
    EXPECT_NEAR(m, d.mean(), 4.0 * std::sqrt(d.variance() / n)) << to_string(s.family());
    // variance of the sample variance is bounded by a generous kurtosis allowance
    EXPECT_NEAR(v / d.variance(), 1.0, 0.05) << to_string(s.family());
  }
  RngStream rng(2, 0);
  for (double y : set_distribution(LevySeed::poisson(1.0), 0.0).sample(rng, 100)) EXPECT_EQ(y, 0.0);
}

TEST(Sampling, ConvolutionClosure) {
  const int n = 100000;
  for (const auto &s : all_seeds()) {
    const auto a = set_distribution(s, 0.4), b = set_distribution(s, 0.9), ab = set_distribution(s, 1.3);
    RngStream r1(3, 0), r2(3, 1);
    std::vector<double> sum(n), direct(n);
    for (int k = 0; k < n; ++k) sum[k] = a.sample(r1) + b.sample(r1);
    for (int k = 0; k < n; ++k) direct[k] = ab.sample(r2);
    // two-sample KS critical value at size 0.01
    const double crit = 1.628 * std::sqrt(2.0 / n);
    EXPECT_LT(ks_two_sample(sum, direct), crit) << to_string(s.family());
  }
}

TEST(Seed, Validation) {
  EXPECT_THROW(LevySeed::gamma(-1.0, 1.0), Error);
  EXPECT_THROW(LevySeed::negative_binomial(1.0, 0.0), Error);
  EXPECT_EQ(parse_seed_family("inverse_gaussian"), SeedFamily::InverseGaussian);
  EXPECT_THROW(parse_seed_family("stable"), Error);
  const auto s = LevySeed::from_parameters(SeedFamily::Gamma, {2.0, 3.0});
  EXPECT_EQ(s, LevySeed::gamma(2.0, 3.0));
  EXPECT_EQ(LevySeed::parameter_names(SeedFamily::NegBinomial), (std::vector<std::string>{"mean", "theta"}));
}
