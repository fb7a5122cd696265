#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "levyconv/tail.hpp"

using namespace levyconv;

namespace {

// E exp(beta min(A, B)) for two iid IG(0.5 v^2, v) residuals, v = 1 - C(u) for the
// Gaussian kernel at u = 0.3, 1, 2. mpmath quadrature of the min density 2 f Fbar.
constexpr double kIgMinMgf[3] = {1.00465450087161042045, 1.02921161542481338035, 1.06989905514165797153};

} // namespace

TEST(TheoreticalChi, SubexponentialLaplaceAtRho) {
  const auto g = pair_geometry(HeightFunction::laplace(1.0), 1.0);
  const auto t = theoretical_chi(TailClass::subexponential(), g);
  EXPECT_NEAR(t.chi, std::exp(-1.0), 1e-12);
  EXPECT_EQ(t.chibar, 1.0);
  EXPECT_EQ(t.eta, 1.0);
}

TEST(TheoreticalChi, GammaIsAsymptoticallyIndependentOffLagZero) {
  const auto tc = TailClass::for_seed(LevySeed::gamma(2.0, 1.0));
  for (double u : {0.1, 0.5, 1.0, 3.0}) {
    const auto t = theoretical_chi(tc, pair_geometry(HeightFunction::gaussian(1.0), u));
    EXPECT_EQ(t.chi, 0.0);
    EXPECT_EQ(t.chibar, 1.0);
  }
  EXPECT_EQ(theoretical_chi(tc, pair_geometry(HeightFunction::gaussian(1.0), 0.0)).chi, 1.0);
}

TEST(TheoreticalChi, InverseGaussianLagZeroIsOne) {
  const auto tc = TailClass::for_seed(LevySeed::inverse_gaussian(2.0, 1.0));
  EXPECT_EQ(theoretical_chi(tc, pair_geometry(HeightFunction::gaussian(1.0), 0.0)).chi, 1.0);
}

TEST(TheoreticalChi, InverseGaussianMatchesMinDensityRoute) {
  const double lambda = 0.5, mu = 1.0;
  const auto seed = LevySeed::inverse_gaussian(lambda, mu);
  const auto tc = TailClass::for_seed(seed);
  EXPECT_NEAR(tc.beta, lambda / (2.0 * mu * mu), 1e-15);
  EXPECT_NEAR(tc.seed_mgf_at_beta, std::exp(lambda / mu), 1e-12);
  const double lags[3] = {0.3, 1.0, 2.0};
  for (int i = 0; i < 3; ++i) {
    const auto g = pair_geometry(HeightFunction::gaussian(1.0), lags[i]);
    EXPECT_NEAR(residual_min_mgf(g.residual(seed), tc.beta), kIgMinMgf[i], 1e-9);
    const double expected = g.alpha0 / g.alpha * kIgMinMgf[i] * std::exp(-g.alpha_res * lambda / mu);
    EXPECT_NEAR(theoretical_chi(tc, g).chi, expected, 1e-9) << "u=" << lags[i];
  }
}

TEST(TheoreticalChi, MonotoneAndBounded) {
  const std::vector<TailClass> classes = {TailClass::subexponential(),
                                          TailClass::for_seed(LevySeed::gamma(1.0, 2.0)),
                                          TailClass::for_seed(LevySeed::inverse_gaussian(1.0, 1.5))};
  for (const auto &tc : classes) {
    double prev = 2.0;
    for (int k = 0; k <= 30; ++k) {
      const auto t = theoretical_chi(tc, pair_geometry(HeightFunction::laplace(1.0), 0.1 * k));
      EXPECT_GE(t.chi, 0.0);
      EXPECT_LE(t.chi, 1.0);
      EXPECT_GE(t.chibar, -1.0);
      EXPECT_LE(t.chibar, 1.0);
      if (t.chi > 0.0) {
        EXPECT_EQ(t.chibar, 1.0);
      }
      EXPECT_LE(t.chi, prev + 1e-12);
      prev = t.chi;
    }
  }
}

TEST(TheoreticalChi, Validation) {
  EXPECT_THROW(theoretical_chi(TailClass::subexponential(), PairGeometry{1.0, 1.5, 0.0}), Error);
  EXPECT_THROW(TailClass::for_seed(LevySeed::gaussian(1.0)), Error);
  EXPECT_EQ(make_tail_summary(0.3, 0.4).eta, 0.7);
}

TEST(GammaAsymptote, NoResidualIsOne) {
  const auto g = pair_geometry(HeightFunction::gaussian(1.0), 0.0);
  for (double x : {1.0, 10.0, 100.0}) EXPECT_EQ(gamma_conditional_asymptote(1.5, 2.0, g, x), 1.0);
}

TEST(GammaAsymptote, DoublingFactor) {
  const double ap = 1.7;
  const auto g = pair_geometry(HeightFunction::gaussian(1.0), 0.8);
  for (double x : {5.0, 20.0, 80.0}) {
    const double r = gamma_conditional_asymptote(ap, 1.3, g, 2.0 * x) / gamma_conditional_asymptote(ap, 1.3, g, x);
    EXPECT_NEAR(r, std::pow(2.0, -ap * g.alpha_res), 1e-12);
  }
  EXPECT_THROW(gamma_conditional_asymptote(1.0, 1.0, pair_geometry(HeightFunction::cylinder(1.0), 5.0), 3.0),
               Error);
}

TEST(GammaAsymptote, AgreesWithMonteCarloAtHighQuantile) {
  const double ap = 1.0, beta = 1.0;
  const auto seed = LevySeed::gamma(ap, beta);
  const auto g = pair_geometry(HeightFunction::gaussian(1.0), 1.0);
  const std::size_t n = 10000000;
  std::vector<double> x1(n), x2(n);
  RngStream rng(91, 0);
  for (std::size_t i = 0; i < n; ++i) std::tie(x1[i], x2[i]) = sample_pair(seed, g, rng);
  std::vector<double> s = x1;
  const auto k = static_cast<std::size_t>(0.999 * n);
  std::nth_element(s.begin(), s.begin() + k, s.end());
  const double x = s[k];
  std::size_t above = 0, both = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (x1[i] > x) {
      ++above;
      if (x2[i] > x) ++both;
    }
  }
  const double mc = static_cast<double>(both) / static_cast<double>(above);
  const double ratio = gamma_conditional_asymptote(ap, beta, g, x) / mc;
  EXPECT_GE(ratio, 0.7);
  EXPECT_LE(ratio, 1.4);
}

TEST(ConvolutionAsymptote, ExponentialPairIsGammaTwo) {
  const auto e = ExpTypeTail::gamma(1.0, 1.0);
  for (double x : {20.0, 40.0}) {
    const double a = convolution_tail_asymptote(e, e, x);
    EXPECT_NEAR(a, x * std::exp(-x), 1e-12 * x * std::exp(-x));
    const double exact = (1.0 + x) * std::exp(-x);
    EXPECT_NEAR(a / exact, 1.0, x == 20.0 ? 0.10 : 0.05);
  }
}

TEST(ConvolutionAsymptote, UnequalShapesAgainstQuadrature) {
  const auto f1 = ExpTypeTail::gamma(1.5, 1.0);
  const auto f2 = ExpTypeTail::gamma(0.7, 1.0);
  const SetDistribution g1(LevySeed::gamma(1.5, 1.0), 1.0);
  const SetDistribution g2(LevySeed::gamma(0.7, 1.0), 1.0);
  for (double x : {20.0, 40.0}) {
    // P(Y1 + Y2 > x) = Fbar2(x) + int_0^x f2(y) Fbar1(x - y) dy
    const double conv =
        g2.sf(x) + integrate([&](double y) { return g2.density(y) * g1.sf(x - y); }, 0.0, x, {1e-300, 1e-12, 2000})
                       .value;
    EXPECT_NEAR(conv / gamma_q(2.2, x), 1.0, 1e-8);
    EXPECT_NEAR(convolution_tail_asymptote(f1, f2, x) / conv, 1.0, x == 20.0 ? 0.10 : 0.05);
  }
}

TEST(ConvolutionAsymptote, MismatchedRatesRejected) {
  EXPECT_THROW(convolution_tail_asymptote(ExpTypeTail::gamma(1.0, 1.0), ExpTypeTail::gamma(1.0, 2.0), 10.0), Error);
}

TEST(EmpiricalChi, ComonotoneIsOne) {
  std::vector<std::pair<double, double>> p;
  RngStream rng(5, 0);
  std::exponential_distribution<double> ex(1.0);
  for (int i = 0; i < 5000; ++i) {
    const double v = ex(rng);
    p.emplace_back(v, std::exp(v));
  }
  for (double q : {0.6, 0.9, 0.99}) {
    const auto e = empirical_chi(p, q);
    EXPECT_NEAR(e.chi, 1.0, 1e-9);
    EXPECT_NEAR(e.chibar, 1.0, 1e-9);
  }
}

TEST(EmpiricalChi, IndependentPairs) {
  std::vector<std::pair<double, double>> p;
  RngStream rng(6, 0);
  std::normal_distribution<double> z;
  for (int i = 0; i < 200000; ++i) p.emplace_back(z(rng), z(rng));
  for (double q : {0.8, 0.9}) {
    const auto e = empirical_chi(p, q);
    EXPECT_NEAR(e.chi, 1.0 - q, 4.0 * e.chi_se);
    EXPECT_NEAR(e.chibar, 0.0, 4.0 * e.chibar_se);
  }
}

TEST(EmpiricalChi, Errors) {
  std::vector<std::pair<double, double>> p;
  for (int i = 0; i < 1000; ++i) p.emplace_back(i, -i);
  EXPECT_THROW(
      {
        try {
          empirical_chi(p, 0.9);
        } catch (const Error &e) {
          EXPECT_EQ(e.kind(), ErrorKind::DegenerateTail);
          throw;
        }
      },
      Error);
  EXPECT_THROW(empirical_chi(p, 0.4), Error);
  EXPECT_THROW(empirical_chi(p, 1.0), Error);
  p.resize(499);
  EXPECT_THROW(empirical_chi(p, 0.9), Error);
}

TEST(EmpiricalChi, SubexponentialSurrogateMatchesVolumeRatio) {
  // positive 1/2-stable basis: volume v gives v^2 / Z^2, regularly varying
  const auto g = pair_geometry(HeightFunction::gaussian(1.0), 0.8);
  std::vector<std::pair<double, double>> p;
  RngStream rng(7, 0);
  std::normal_distribution<double> z;
  auto levy = [&](double v) {
    const double w = z(rng);
    return v * v / (w * w);
  };
  for (int i = 0; i < 200000; ++i) {
    const double a = levy(g.alpha0);
    p.emplace_back(a + levy(g.alpha_res), a + levy(g.alpha_res));
  }
  const auto e = empirical_chi(p, 0.98);
  const auto t = theoretical_chi(TailClass::subexponential(), g);
  EXPECT_NEAR(e.chi, t.chi, 3.0 * e.chi_se);
}

TEST(EmpiricalChi, GammaPairsShowDecayingChi) {
  const auto seed = LevySeed::gamma(1.0, 1.0);
  const auto g = pair_geometry(HeightFunction::gaussian(1.0), 1.0);
  RngStream rng(8, 0);
  std::vector<std::pair<double, double>> p(100000);
  for (auto &x : p) x = sample_pair(seed, g, rng);
  const double c90 = empirical_chi(p, 0.90).chi;
  const double c95 = empirical_chi(p, 0.95).chi;
  const double c99 = empirical_chi(p, 0.99).chi;
  EXPECT_GT(c90, c95);
  EXPECT_GT(c95, c99);
}
