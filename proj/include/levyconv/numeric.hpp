#pragma once

// Special functions, adaptive quadrature and reproducible random streams.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "levyconv/errors.hpp"

namespace levyconv {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kEps = std::numeric_limits<double>::epsilon();

// ---------------------------------------------------------------------------
// Gaussian distribution function

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

inline double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double std_normal_sf(double x) { return std_normal_cdf(-x); }

/// log(Phi(x)); uses the Mills-ratio expansion below -20 where erfc underflows.
inline double log_std_normal_cdf(double x) {
  if (x > -20.0) return std::log(std_normal_cdf(x));
  const double z2 = 1.0 / (x * x);
  const double series =
      1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2 * (1.0 - 9.0 * z2))));
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * kPi) +
         std::log(series);
}

// ---------------------------------------------------------------------------
// Gamma function family

inline double log_gamma(double x) {
  require(x > 0.0, "log_gamma requires x > 0");
  return std::lgamma(x);
}

inline double log_beta(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

namespace detail {

inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) return h;
  }
  throw Error(ErrorKind::NonConvergence, "incomplete beta continued fraction");
}

} // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, "incomplete_beta requires a, b > 0");
  require(x >= 0.0 && x <= 1.0, "incomplete_beta requires x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 -
         std::exp(log_front) * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  require(a > 0.0 && x >= 0.0, "gamma_p requires a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x == kInf) return 1.0;
  const double log_front = -x + a * std::log(x) - log_gamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0; n < 100000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16)
        return std::min(1.0, sum * std::exp(log_front));
    }
    throw Error(ErrorKind::NonConvergence, "gamma_p series");
  }
  // Continued fraction for Q, modified Lentz.
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) return 1.0 - std::exp(log_front) * h;
  }
  throw Error(ErrorKind::NonConvergence, "gamma_q continued fraction");
}

inline double gamma_q(double a, double x) {
  require(a > 0.0 && x >= 0.0, "gamma_q requires a > 0, x >= 0");
  if (x < a + 1.0) return 1.0 - gamma_p(a, x);
  if (x == kInf) return 0.0;
  constexpr double kTiny = 1e-300;
  const double log_front = -x + a * std::log(x) - log_gamma(a);
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) return std::exp(log_front) * h;
  }
  throw Error(ErrorKind::NonConvergence, "gamma_q continued fraction");
}

// ---------------------------------------------------------------------------
// Student t

inline double student_t_cdf(double x, double nu) {
  require(nu > 0.0, "student_t_cdf requires nu > 0");
  if (std::isnan(x)) return kNaN;
  if (x == kInf) return 1.0;
  if (x == -kInf) return 0.0;
  const double x2 = x * x;
  double upper_tail; // P(T > |x|)
  if (x2 < nu) {
    upper_tail = 0.5 - 0.5 * incomplete_beta(0.5, 0.5 * nu, x2 / (nu + x2));
  } else {
    upper_tail = 0.5 * incomplete_beta(0.5 * nu, 0.5, nu / (nu + x2));
  }
  return x >= 0.0 ? 1.0 - upper_tail : upper_tail;
}

inline double student_t_sf(double x, double nu) { return student_t_cdf(-x, nu); }

// ---------------------------------------------------------------------------
// Modified Bessel function of the second kind.
//
// Temme's series for x <= 2, Steed's continued fraction for x > 2, both at the
// reduced order |mu| <= 1/2, followed by upward recurrence in the order. The
// recurrence is carried with an explicit log scale so large orders at small
// arguments stay representable.

namespace detail {

// Taylor coefficients of 1/Gamma(z) (Abramowitz & Stegun 6.1.34).
inline constexpr std::array<double, 26> kRecipGammaCoeffs = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

struct TemmeGammas {
  double gam1;  // (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)
  double gam2;  // (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2
  double gampl; // 1/Gamma(1+mu)
  double gammi; // 1/Gamma(1-mu)
};

inline TemmeGammas temme_gammas(double mu) {
  // 1/Gamma(1+z) = sum_i c[i] z^i; evaluate even and odd powers separately so
  // the mu -> 0 difference in gam1 never cancels.
  const double mu2 = mu * mu;
  double even = 0.0;
  double odd = 0.0;
  for (int k = static_cast<int>(kRecipGammaCoeffs.size()) - 1; k >= 0; --k) {
    if (k % 2 == 0)
      even = even * mu2 + kRecipGammaCoeffs[k];
    else
      odd = odd * mu2 + kRecipGammaCoeffs[k];
  }
  return {-odd, even, even + mu * odd, even - mu * odd};
}

struct ScaledValue {
  double mantissa;
  double log_scale; // value = mantissa * exp(log_scale)
};

/// Returns K_nu(x) * exp(x) as mantissa * exp(log_scale).
inline ScaledValue bessel_k_scaled_parts(double nu, double x) {
  constexpr double kTol = 1e-16;
  constexpr int kMaxIter = 100000;
  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;
  const double mu2 = mu * mu;
  const double xi = 1.0 / x;
  const double xi2 = 2.0 * xi;
  double rkmu;
  double rk1;
  double log_scale = 0.0;
  if (x <= 2.0) {
    const double x2 = 0.5 * x;
    const double pimu = kPi * mu;
    const double fact = std::abs(pimu) < kTol ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::abs(e) < kTol ? 1.0 : std::sinh(e) / e;
    const TemmeGammas g = temme_gammas(mu);
    double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / g.gampl;
    double q = 0.5 / (e * g.gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    int i = 1;
    for (; i <= kMaxIter; ++i) {
      ff = (i * ff + p + q) / (i * static_cast<double>(i) - mu2);
      c *= d / i;
      p /= (i - mu);
      q /= (i + mu);
      const double del = c * ff;
      sum += del;
      const double del1 = c * (p - i * ff);
      sum1 += del1;
      if (std::abs(del) < std::abs(sum) * kTol) break;
    }
    if (i > kMaxIter)
      throw Error(ErrorKind::NonConvergence, "bessel_k series");
    rkmu = sum;
    rk1 = sum1 * xi2;
    log_scale = x;
  } else {
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    int i = 2;
    for (; i <= kMaxIter; ++i) {
      a -= 2 * (i - 1);
      c = -a * c / i;
      const double qnew = (q1 - b * q2) / a;
      q1 = q2;
      q2 = qnew;
      q += c * qnew;
      b += 2.0;
      d = 1.0 / (b + a * d);
      delh = (b * d - 1.0) * delh;
      h += delh;
      const double dels = q * delh;
      s += dels;
      if (std::abs(dels / s) < kTol) break;
    }
    if (i > kMaxIter)
      throw Error(ErrorKind::NonConvergence, "bessel_k continued fraction");
    h = a1 * h;
    rkmu = std::sqrt(kPi / (2.0 * x)) / s;
    rk1 = rkmu * (mu + x + 0.5 - h) * xi;
  }
  constexpr double kBig = 1e250;
  for (int i = 1; i <= nl; ++i) {
    const double next = (mu + i) * xi2 * rk1 + rkmu;
    rkmu = rk1;
    rk1 = next;
    if (std::abs(rk1) > kBig) {
      rk1 /= kBig;
      rkmu /= kBig;
      log_scale += std::log(kBig);
    }
  }
  return {rkmu, log_scale};
}

} // namespace detail

/// log K_nu(x) for nu >= 0 (K is even in nu, so negative orders are folded).
inline double log_bessel_k(double nu, double x) {
  require(x > 0.0, "bessel_k requires x > 0");
  require(std::isfinite(nu), "bessel_k requires finite order");
  const auto parts = detail::bessel_k_scaled_parts(std::abs(nu), x);
  return std::log(parts.mantissa) + parts.log_scale - x;
}

/// exp(x) * K_nu(x); stays finite where K_nu(x) itself underflows.
inline double bessel_k_scaled(double nu, double x) {
  require(x > 0.0, "bessel_k requires x > 0");
  const auto parts = detail::bessel_k_scaled_parts(std::abs(nu), x);
  return parts.mantissa * std::exp(parts.log_scale);
}

inline double bessel_k(double nu, double x) {
  require(x > 0.0, "bessel_k requires x > 0");
  const auto parts = detail::bessel_k_scaled_parts(std::abs(nu), x);
  return parts.mantissa * std::exp(parts.log_scale - x);
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod quadrature

struct QuadratureSpec {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_subdivisions = 500;

  void validate() const {
    require(abs_tol > 0.0 && rel_tol > 0.0,
            "quadrature tolerances must be positive");
    require(max_subdivisions >= 1, "max_subdivisions must be >= 1");
  }
};

struct QuadratureResult {
  double value;
  double err_estimate;
  int subdivisions;
};

namespace detail {

inline constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208067201806, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Segment {
  double lo;
  double hi;
  double value;
  double error;
  bool operator<(const Segment &other) const { return error < other.error; }
};

template <class F>
Segment gauss_kronrod_21(const F &f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  if (!std::isfinite(fc))
    throw Error(ErrorKind::NonConvergence, "integrand is not finite");
  double resk = kKronrodWeights[10] * fc;
  double resg = 0.0;
  double resabs = std::abs(resk);
  std::array<double, 10> f1{};
  std::array<double, 10> f2{};
  for (int j = 0; j < 10; ++j) {
    const double dx = half * kKronrodNodes[j];
    f1[j] = f(center - dx);
    f2[j] = f(center + dx);
    if (!std::isfinite(f1[j]) || !std::isfinite(f2[j]))
      throw Error(ErrorKind::NonConvergence, "integrand is not finite");
    resk += kKronrodWeights[j] * (f1[j] + f2[j]);
    resabs += kKronrodWeights[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) resg += kGaussWeights[j / 2] * (f1[j] + f2[j]);
  }
  const double reskh = 0.5 * resk;
  double resasc = kKronrodWeights[10] * std::abs(fc - reskh);
  for (int j = 0; j < 10; ++j)
    resasc += kKronrodWeights[j] * (std::abs(f1[j] - reskh) + std::abs(f2[j] - reskh));
  const double ahalf = std::abs(half);
  resabs *= ahalf;
  resasc *= ahalf;
  double err = std::abs((resk - resg) * half);
  if (resasc != 0.0 && err != 0.0)
    err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  if (resabs > std::numeric_limits<double>::min() / (50.0 * kEps))
    err = std::max(50.0 * kEps * resabs, err);
  return {lo, hi, resk * half, err};
}

template <class F>
QuadratureResult integrate_finite(const F &f, double lo, double hi,
                                  const QuadratureSpec &spec) {
  std::priority_queue<Segment> heap;
  Segment first = gauss_kronrod_21(f, lo, hi);
  double total = first.value;
  double total_err = first.error;
  heap.push(first);
  int subdivisions = 0;
  while (total_err > std::max(spec.abs_tol, spec.rel_tol * std::abs(total))) {
    if (subdivisions >= spec.max_subdivisions)
      throw Error(ErrorKind::NonConvergence,
                  "quadrature did not converge within " +
                      std::to_string(spec.max_subdivisions) + " subdivisions");
    const Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(mid > worst.lo && mid < worst.hi))
      throw Error(ErrorKind::NonConvergence, "quadrature interval underflow");
    const Segment left = gauss_kronrod_21(f, worst.lo, mid);
    const Segment right = gauss_kronrod_21(f, mid, worst.hi);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++subdivisions;
    // Re-sum periodically to keep the running totals from drifting.
    if (subdivisions % 64 == 0) {
      auto copy = heap;
      total = 0.0;
      total_err = 0.0;
      while (!copy.empty()) {
        total += copy.top().value;
        total_err += copy.top().error;
        copy.pop();
      }
    }
  }
  return {total, total_err, subdivisions};
}

} // namespace detail

/// Integrates f over [lower, upper]; either bound may be infinite.
template <class F>
QuadratureResult integrate(const F &f, double lower, double upper,
                           const QuadratureSpec &spec = {}) {
  spec.validate();
  require(!std::isnan(lower) && !std::isnan(upper), "integration bounds are NaN");
  if (lower == upper) return {0.0, 0.0, 0};
  if (lower > upper) {
    auto r = integrate(f, upper, lower, spec);
    r.value = -r.value;
    return r;
  }
  const bool lo_inf = std::isinf(lower);
  const bool hi_inf = std::isinf(upper);
  if (!lo_inf && !hi_inf) return detail::integrate_finite(f, lower, upper, spec);
  if (lo_inf && hi_inf) {
    auto g = [&f](double t) {
      const double d = 1.0 - t * t;
      return f(t / d) * (1.0 + t * t) / (d * d);
    };
    return detail::integrate_finite(g, -1.0, 1.0, spec);
  }
  if (hi_inf) {
    auto g = [&f, lower](double t) {
      const double d = 1.0 - t;
      return f(lower + t / d) / (d * d);
    };
    return detail::integrate_finite(g, 0.0, 1.0, spec);
  }
  auto g = [&f, upper](double t) {
    const double d = 1.0 - t;
    return f(upper - t / d) / (d * d);
  };
  return detail::integrate_finite(g, 0.0, 1.0, spec);
}

// ---------------------------------------------------------------------------
// Root bracketing

/// Bisection on a monotone function; returns x with f(x) ~ 0 in [lo, hi].
template <class F>
double bisect(const F &f, double lo, double hi, double x_tol = 1e-13,
              int max_iter = 400) {
  double flo = f(lo);
  for (int i = 0; i < max_iter && hi - lo > x_tol * std::max(1.0, std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Summation

/// Neumaier compensated summation.
class CompensatedSum {
public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Order-independent sum: sorts a copy, then accumulates with compensation.
inline double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  CompensatedSum acc;
  for (double t : terms) acc.add(t);
  return acc.value();
}

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// A seedable generator identified by (seed, stream). Streams derived from
/// the same seed are statistically independent, so replicate r can always
/// use `RngStream(seed, r)` no matter which worker runs it.
class RngStream {
public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream),
        engine_(splitmix64(splitmix64(seed) ^ splitmix64(~stream + 0x632BE59BD9B4E019ULL))) {}

  RngStream split(std::uint64_t child) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(stream_)), child);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  std::mt19937_64 &engine() { return engine_; }

private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

} // namespace levyconv
