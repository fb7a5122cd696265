#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "levyconv/hypograph.hpp"

using namespace levyconv;

namespace {

std::vector<HeightFunction> continuous_kernels(double rho) {
  return {HeightFunction::cylinder(rho), HeightFunction::half_ball(rho), HeightFunction::gaussian(rho),
          HeightFunction::student_t(rho, 3.0), HeightFunction::laplace(rho), HeightFunction::slash(rho)};
}

// Half-plane mass of H beyond x = u / 2, integrated from the height function.
// Overlap of A_H and s + A_H is twice this by the bisector argument.
double lens_by_quadrature(const HeightFunction &h, double u) {
  const QuadratureSpec spec{1e-12, 1e-9, 600};
  auto inner = [&](double x) {
    auto f = [&](double y) { return h.height(std::hypot(x, y)); };
    const double r = h.support_radius();
    if (std::isfinite(r)) {
      if (x >= r) return 0.0;
      const double ym = std::sqrt(r * r - x * x);
      return 2.0 * integrate(f, 0.0, ym, spec).value;
    }
    return 2.0 * integrate(f, 0.0, kInf, spec).value;
  };
  const double r = h.support_radius();
  return 2.0 * integrate(inner, 0.5 * u, std::isfinite(r) ? r : kInf, spec).value;
}

} // namespace

TEST(Correlation, PaperValues) {
  EXPECT_NEAR(HeightFunction::laplace(1.3).correlation(1.3), std::exp(-1.0), 1e-14);
  EXPECT_NEAR(HeightFunction::gaussian(0.8).correlation(1.6), 0.31731050786291415, 1e-12);
  EXPECT_EQ(HeightFunction::cylinder(1.0).correlation(2.0), 0.0);
  EXPECT_EQ(HeightFunction::cylinder(1.0).correlation(5.0), 0.0);
  // normalized disc lens at u = rho
  EXPECT_NEAR(HeightFunction::cylinder(1.0).correlation(1.0),
              (2.0 * std::acos(0.5) - 0.5 * std::sqrt(3.0)) / kPi, 1e-14);
  // 2 tbar_3(0.75), scipy
  EXPECT_NEAR(HeightFunction::student_t(2.0, 3.0).correlation(3.0), 0.507714579424134, 1e-10);
}

TEST(Correlation, HalfBallLensPolynomial) {
  const double rho = 1.7;
  auto lens = [&](double u) { return kPi * (4.0 * rho + u) * (2.0 * rho - u) * (2.0 * rho - u) / 12.0; };
  for (double u : {0.0, 0.3, 1.0, 2.2, 3.39})
    EXPECT_NEAR(HeightFunction::half_ball(rho).correlation(u), lens(u) / lens(0.0), 1e-13) << u;
}

TEST(Correlation, LensIntegralOracle) {
  for (const auto &h : continuous_kernels(0.9))
    for (double u : {0.2, 0.7, 1.5, 2.6}) {
      EXPECT_NEAR(h.correlation(u), lens_by_quadrature(h, u), 2e-7) << to_string(h.family()) << " " << u;
    }
}

TEST(Correlation, ShapeProperties) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> rho(0.2, 3.0), nu(0.5, 8.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto hs = continuous_kernels(rho(gen));
    hs.push_back(HeightFunction::student_t(rho(gen), nu(gen)));
    for (const auto &h : hs) {
      EXPECT_EQ(h.correlation(0.0), 1.0);
      double prev = 1.0;
      for (int k = 1; k <= 200; ++k) {
        const double u = 0.05 * k * h.rho();
        const double c = h.correlation(u);
        EXPECT_LE(c, prev + 1e-15);
        EXPECT_GE(c, 0.0);
        EXPECT_NEAR(c, 2.0 * h.radial_survival(0.5 * u), 1e-10);
        prev = c;
      }
      EXPECT_DOUBLE_EQ(h.radial_survival(0.0), 0.5);
    }
  }
}

TEST(Correlation, SlashNearZeroIsSmooth) {
  const auto h = HeightFunction::slash(1.0);
  EXPECT_DOUBLE_EQ(h.correlation(0.0), 1.0);
  EXPECT_NEAR(h.correlation(1e-9), 1.0, 1e-9);
  // density series and closed form meet at r = sqrt(2) rho
  const double r = std::sqrt(2.0);
  EXPECT_NEAR(h.height(r * (1.0 - 1e-12)), h.height(r * (1.0 + 1e-12)), 1e-10);
  EXPECT_NEAR(h.radial_cdf(r * (1.0 - 1e-12)), h.radial_cdf(r * (1.0 + 1e-12)), 1e-10);
}

TEST(HeightFunction, Normalized) {
  for (const auto &h : continuous_kernels(1.2)) {
    const double r_max = std::isfinite(h.support_radius()) ? h.support_radius() : kInf;
    const double mass =
        integrate([&](double r) { return r > 0.0 ? 2.0 * kPi * r * h.height(r) : 0.0; }, 0.0, r_max,
                  {1e-12, 1e-10, 600})
            .value;
    EXPECT_NEAR(mass, 1.0, 1e-8) << to_string(h.family());
    for (double r : {0.3, 1.0, 2.5})
      EXPECT_NEAR(h.radial_cdf(r),
                  integrate([&](double s) { return s > 0.0 ? 2.0 * kPi * s * h.height(s) : 0.0; }, 0.0,
                            std::min(r, r_max), {1e-12, 1e-10, 600})
                      .value,
                  1e-8)
          << to_string(h.family()) << " " << r;
  }
}

TEST(HeightFunction, RadialSurvivalPaperForms) {
  const auto lap = HeightFunction::laplace(2.0);
  for (double u : {0.0, 0.5, 3.0}) EXPECT_NEAR(lap.radial_survival(u * 1.0), 0.5 * std::exp(-u), 1e-15);
  const auto t = HeightFunction::student_t(1.5, 4.0);
  EXPECT_NEAR(t.radial_survival(0.9), student_t_sf(0.6, 4.0), 1e-15);
  EXPECT_THROW(HeightFunction::nugget().radial_survival(0.1), Error);
}

TEST(HeightFunction, NuggetMixture) {
  const auto h = HeightFunction::gaussian(1.0).with_nugget(0.3);
  EXPECT_EQ(h.correlation(0.0), 1.0);
  EXPECT_NEAR(h.correlation(1e-12), 0.7, 1e-10);
  EXPECT_NEAR(h.correlation(1.0), 0.7 * HeightFunction::gaussian(1.0).correlation(1.0), 1e-14);
  EXPECT_NEAR(h.nugget_weight(), 0.3, 1e-15);
  EXPECT_EQ(HeightFunction::nugget().correlation(0.5), 0.0);
  EXPECT_THROW(HeightFunction::convex_sum({0.5, 0.6}, {HeightFunction::gaussian(1.0), HeightFunction::nugget()}),
               Error);
}

TEST(HeightFunction, LinearApproximation) {
  EXPECT_EQ(correlation_linear_approx(2.0, 0.0), 1.0);
  EXPECT_EQ(correlation_linear_approx(2.0, 4.0), 0.0);
  EXPECT_EQ(correlation_linear_approx(2.0, 2.0), 0.5);
  EXPECT_THROW(correlation_linear_approx(0.0, 1.0), Error);
  // the approximation overstates the lens; largest gap 0.1154 near u = 1.24 rho
  double worst = 0.0;
  const auto cyl = HeightFunction::cylinder(1.0);
  for (int k = 0; k <= 2000; ++k) {
    const double u = 2.0 * k / 2000.0;
    worst = std::max(worst, correlation_linear_approx(1.0, u) - cyl.correlation(u));
  }
  EXPECT_NEAR(worst, 0.11542, 1e-4);
  EXPECT_NEAR(cyl.correlation(1.0), 0.391002, 1e-6);
}

TEST(PairGeometry, Values) {
  const auto g0 = pair_geometry(HeightFunction::laplace(1.0), 0.0);
  EXPECT_EQ(g0.alpha, 1.0);
  EXPECT_EQ(g0.alpha0, 1.0);
  EXPECT_EQ(g0.alpha_res, 0.0);
  const auto g3 = pair_geometry(HeightFunction::cylinder(1.0), 3.0);
  EXPECT_EQ(g3.alpha0, 0.0);
  EXPECT_EQ(g3.alpha_res, 1.0);
  for (double u : {0.1, 0.9, 2.0}) {
    const auto g = pair_geometry(HeightFunction::gaussian(0.7), u);
    EXPECT_NEAR(g.alpha0 + g.alpha_res, g.alpha, 1e-15);
    EXPECT_NEAR(g.alpha0, HeightFunction::gaussian(0.7).correlation(u), 1e-15);
  }
}

TEST(PairGeometry, MonteCarloOverlap) {
  // alpha0 = E[min(H(Y), H(Y - s)) / H(Y)] for Y ~ H
  const auto h = HeightFunction::gaussian(1.0);
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z(0.0, 1.0);
  const double u = 1.1;
  const int n = 2000000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = z(gen), y = z(gen);
    s += std::min(1.0, h.height(std::hypot(x - u, y)) / h.height(std::hypot(x, y)));
  }
  EXPECT_NEAR(s / n, pair_geometry(h, u).alpha0, 1e-3);
}

TEST(Anisotropy, Transform) {
  const std::vector<double> p = {0.3, -1.2};
  EXPECT_EQ(transform_coordinates(Anisotropy(), p), p);
  const auto r = transform_coordinates(Anisotropy(kPi / 2.0, 1.0), {1.0, 0.0});
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(std::abs(r[1]), 1.0, 1e-15);
  const auto s = transform_coordinates(Anisotropy(0.0, 2.0), {1.0, 0.0});
  EXPECT_EQ(s, (std::vector<double>{2.0, 0.0}));
  EXPECT_THROW(transform_coordinates(Anisotropy(), {1.0, 2.0, 3.0}), Error);
  EXPECT_THROW(Anisotropy(0.0, 0.9), Error);
  EXPECT_THROW(Anisotropy(kPi, 1.0), Error);
  const Anisotropy a(1.24, 1.46);
  const Point2 x = {0.7, -2.1};
  const auto back = a.invert(a.apply(x));
  EXPECT_NEAR(back[0], x[0], 1e-14);
  EXPECT_NEAR(back[1], x[1], 1e-14);
  EXPECT_EQ(a.apply({0.0, 0.0}), (Point2{0.0, 0.0}));
}
