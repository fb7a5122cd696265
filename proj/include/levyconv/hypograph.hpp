#pragma once

// Height functions H (spherical densities on R^2), their 1-D marginal
// survival Gbar, the induced correlation C(u) = 2 Gbar(u/2), and geometric
// anisotropy.
//
// Scale conventions (r in natural units, rho the family scale):
//   Cylinder   uniform on the disc of radius rho
//   HalfBall   H proportional to sqrt(rho^2 - r^2)
//   Gaussian   bivariate normal with sd rho per axis
//   StudentT   bivariate t_nu with scale rho
//   Laplace    1-D margin Laplace with scale rho/2, so that C(u) = exp(-u/rho)
//   Slash      rho * Z / U, Z bivariate standard normal, U uniform

#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "levyconv/errors.hpp"
#include "levyconv/levy_basis.hpp"
#include "levyconv/numeric.hpp"

namespace levyconv {

using Point2 = std::array<double, 2>;

enum class KernelFamily { Cylinder, HalfBall, Gaussian, StudentT, Laplace, Slash, Nugget, ConvexSum };

inline std::string_view to_string(KernelFamily f) {
  switch (f) {
  case KernelFamily::Cylinder: return "cylinder";
  case KernelFamily::HalfBall: return "half_ball";
  case KernelFamily::Gaussian: return "gaussian";
  case KernelFamily::StudentT: return "student_t";
  case KernelFamily::Laplace: return "laplace";
  case KernelFamily::Slash: return "slash";
  case KernelFamily::Nugget: return "nugget";
  case KernelFamily::ConvexSum: return "convex_sum";
  }
  return "unknown";
}

inline KernelFamily parse_kernel_family(std::string_view name) {
  for (auto f : {KernelFamily::Cylinder, KernelFamily::HalfBall, KernelFamily::Gaussian,
                 KernelFamily::StudentT, KernelFamily::Laplace, KernelFamily::Slash,
                 KernelFamily::Nugget})
    if (to_string(f) == name) return f;
  if (name == "cauchy") return KernelFamily::StudentT;
  throw Error(ErrorKind::InvalidArgument, "unknown kernel family '" + std::string(name) + "'");
}

class HeightFunction {
public:
  static HeightFunction cylinder(double rho) { return {KernelFamily::Cylinder, rho, 0.0}; }
  static HeightFunction half_ball(double rho) { return {KernelFamily::HalfBall, rho, 0.0}; }
  static HeightFunction gaussian(double rho) { return {KernelFamily::Gaussian, rho, 0.0}; }
  static HeightFunction student_t(double rho, double nu) {
    require(std::isfinite(nu) && nu > 0.0, "student_t kernel needs nu > 0");
    return {KernelFamily::StudentT, rho, nu};
  }
  static HeightFunction cauchy(double rho) { return student_t(rho, 1.0); }
  static HeightFunction laplace(double rho) { return {KernelFamily::Laplace, rho, 0.0}; }
  static HeightFunction slash(double rho) { return {KernelFamily::Slash, rho, 0.0}; }
  static HeightFunction nugget() {
    HeightFunction h;
    h.family_ = KernelFamily::Nugget;
    return h;
  }

  /// sum_i w_i H_i; nested sums are flattened.
  static HeightFunction convex_sum(const std::vector<double> &weights,
                                   const std::vector<HeightFunction> &parts) {
    require(!parts.empty() && weights.size() == parts.size(),
            "convex sum needs one weight per part");
    double total = 0.0;
    for (double w : weights) {
      require(std::isfinite(w) && w >= 0.0, "convex sum weights must be >= 0");
      total += w;
    }
    require(std::abs(total - 1.0) <= 1e-12, "convex sum weights must sum to 1");
    HeightFunction h;
    h.family_ = KernelFamily::ConvexSum;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i].family_ == KernelFamily::ConvexSum) {
        for (std::size_t j = 0; j < parts[i].parts_.size(); ++j) {
          h.weights_.push_back(weights[i] * parts[i].weights_[j]);
          h.parts_.push_back(parts[i].parts_[j]);
        }
      } else {
        h.weights_.push_back(weights[i]);
        h.parts_.push_back(parts[i]);
      }
    }
    return h;
  }

  /// (1 - w) * this + w * nugget; w = 0 returns *this unchanged.
  HeightFunction with_nugget(double w) const {
    require(std::isfinite(w) && w >= 0.0 && w <= 1.0, "nugget weight must lie in [0, 1]");
    if (w == 0.0) return *this;
    return convex_sum({1.0 - w, w}, {*this, nugget()});
  }

  /// Builds a single-family kernel from its parameter vector (rho[, nu]).
  static HeightFunction from_parameters(KernelFamily family, const std::vector<double> &p) {
    switch (family) {
    case KernelFamily::Nugget: return nugget();
    case KernelFamily::StudentT:
      require(p.size() == 2, "student_t kernel takes (rho, nu)");
      return student_t(p[0], p[1]);
    case KernelFamily::ConvexSum:
      throw Error(ErrorKind::InvalidArgument, "convex sums are built from parts");
    default:
      require(p.size() == 1, std::string(to_string(family)) + " kernel takes (rho)");
      return HeightFunction(family, p[0], 0.0);
    }
  }

  KernelFamily family() const { return family_; }
  double rho() const { return rho_; }
  double nu() const { return nu_; }
  int dimension() const { return 2; }
  const std::vector<double> &weights() const { return weights_; }
  const std::vector<HeightFunction> &parts() const { return parts_; }

  bool is_nugget() const { return family_ == KernelFamily::Nugget; }
  bool is_simple() const {
    return family_ != KernelFamily::Nugget && family_ != KernelFamily::ConvexSum;
  }

  /// Total weight carried by nugget components.
  double nugget_weight() const {
    if (family_ == KernelFamily::Nugget) return 1.0;
    if (family_ != KernelFamily::ConvexSum) return 0.0;
    double w = 0.0;
    for (std::size_t i = 0; i < parts_.size(); ++i)
      if (parts_[i].is_nugget()) w += weights_[i];
    return w;
  }

  /// H at radius r.
  double height(double r) const {
    require_simple("height");
    r = std::abs(r);
    const double rho2 = rho_ * rho_;
    switch (family_) {
    case KernelFamily::Cylinder: return r <= rho_ ? 1.0 / (kPi * rho2) : 0.0;
    case KernelFamily::HalfBall:
      return r < rho_ ? 1.5 / (kPi * rho2 * rho_) * std::sqrt(rho2 - r * r) : 0.0;
    case KernelFamily::Gaussian:
      return std::exp(-0.5 * r * r / rho2) / (2.0 * kPi * rho2);
    case KernelFamily::StudentT:
      return std::exp(log_gamma(0.5 * nu_ + 1.0) - log_gamma(0.5 * nu_) -
                      (0.5 * nu_ + 1.0) * std::log1p(r * r / (nu_ * rho2))) /
             (nu_ * kPi * rho2);
    case KernelFamily::Laplace: {
      if (r == 0.0) return kInf;
      const double b = 0.5 * rho_;
      return bessel_k(0.0, r / b) / (2.0 * kPi * b * b);
    }
    case KernelFamily::Slash: {
      const double a = 0.5 * r * r / rho2;
      double integral;
      if (a < 1.0) {
        // sum_k (-a)^k / (k! (2k + 3))
        double term = 1.0;
        integral = 0.0;
        for (int k = 0; k < 60; ++k) {
          integral += term / (2.0 * k + 3.0);
          term *= -a / (k + 1.0);
          if (std::abs(term) < 1e-18) break;
        }
      } else {
        integral = std::sqrt(kPi) * std::erf(std::sqrt(a)) / (4.0 * a * std::sqrt(a)) -
                   std::exp(-a) / (2.0 * a);
      }
      return integral / (2.0 * kPi * rho2);
    }
    default: break;
    }
    return kNaN;
  }

  double h_max() const {
    require_simple("h_max");
    if (family_ == KernelFamily::Laplace) return kInf;
    return height(0.0);
  }

  /// Radius beyond which H vanishes (infinite for non-compact kernels).
  double support_radius() const {
    require_simple("support_radius");
    if (family_ == KernelFamily::Cylinder || family_ == KernelFamily::HalfBall) return rho_;
    return kInf;
  }

  /// Gbar(r): survival function of one coordinate of a draw from H.
  double radial_survival(double r) const {
    require(r >= 0.0, "radial_survival needs r >= 0");
    require(family_ != KernelFamily::Nugget, "nugget has no radial survival function");
    if (family_ == KernelFamily::ConvexSum) {
      CompensatedSum s;
      for (std::size_t i = 0; i < parts_.size(); ++i)
        s.add(weights_[i] * (parts_[i].is_nugget() ? (r == 0.0 ? 0.5 : 0.0)
                                                    : parts_[i].radial_survival(r)));
      return s.value();
    }
    const double x = r / rho_;
    switch (family_) {
    case KernelFamily::Cylinder: {
      if (x >= 1.0) return 0.0;
      return (std::acos(x) - x * std::sqrt(1.0 - x * x)) / kPi;
    }
    case KernelFamily::HalfBall:
      if (x >= 1.0) return 0.0;
      return 0.25 * (1.0 - x) * (1.0 - x) * (2.0 + x);
    case KernelFamily::Gaussian: return std_normal_sf(x);
    case KernelFamily::StudentT: return student_t_sf(x, nu_);
    case KernelFamily::Laplace: return 0.5 * std::exp(-2.0 * x);
    case KernelFamily::Slash: {
      if (x == 0.0) return 0.5;
      return std_normal_sf(x) + std_normal_pdf(0.0) * (-std::expm1(-0.5 * x * x)) / x;
    }
    default: break;
    }
    return kNaN;
  }

  /// C(u) = alpha0(u) / alpha.
  double correlation(double u) const {
    require(u >= 0.0 && !std::isnan(u), "correlation needs u >= 0");
    switch (family_) {
    case KernelFamily::Nugget: return u == 0.0 ? 1.0 : 0.0;
    case KernelFamily::ConvexSum: {
      CompensatedSum s;
      for (std::size_t i = 0; i < parts_.size(); ++i)
        s.add(weights_[i] * parts_[i].correlation(u));
      return std::clamp(s.value(), 0.0, 1.0);
    }
    case KernelFamily::Laplace: return std::exp(-u / rho_);
    default: return std::clamp(2.0 * radial_survival(0.5 * u), 0.0, 1.0);
    }
  }

  /// P(|S| <= r) for S with density H.
  double radial_cdf(double r) const {
    require_simple("radial_cdf");
    require(r >= 0.0, "radial_cdf needs r >= 0");
    if (std::isinf(r)) return 1.0;
    const double x = r / rho_;
    switch (family_) {
    case KernelFamily::Cylinder: return x >= 1.0 ? 1.0 : x * x;
    case KernelFamily::HalfBall:
      return x >= 1.0 ? 1.0 : 1.0 - std::pow(1.0 - x * x, 1.5);
    case KernelFamily::Gaussian: return -std::expm1(-0.5 * x * x);
    case KernelFamily::StudentT: return -std::expm1(-0.5 * nu_ * std::log1p(x * x / nu_));
    case KernelFamily::Laplace: {
      const double z = 2.0 * x;
      if (z == 0.0) return 0.0;
      if (z > 700.0) return 1.0;
      return 1.0 - z * bessel_k(1.0, z);
    }
    case KernelFamily::Slash: {
      const double a = 0.5 * x * x;
      if (a < 1.0) {
        // 1 - sum_k (-a)^k / (k! (2k + 1)) = -sum_{k>=1} ...
        double term = -a;
        double s = 0.0;
        for (int k = 1; k < 80; ++k) {
          s += term / (2.0 * k + 1.0);
          term *= -a / (k + 1.0);
          if (std::abs(term) < 1e-19) break;
        }
        return -s;
      }
      return 1.0 - std::sqrt(kPi) * std::erf(std::sqrt(a)) / (2.0 * std::sqrt(a));
    }
    default: break;
    }
    return kNaN;
  }

  double radial_tail_mass(double r) const { return 1.0 - radial_cdf(r); }

  /// Radius r with P(|S| <= r) = p.
  double radial_quantile(double p) const {
    require_simple("radial_quantile");
    require(p >= 0.0 && p < 1.0, "radial_quantile needs p in [0, 1)");
    switch (family_) {
    case KernelFamily::Cylinder: return rho_ * std::sqrt(p);
    case KernelFamily::HalfBall:
      return rho_ * std::sqrt(1.0 - std::pow(1.0 - p, 2.0 / 3.0));
    case KernelFamily::Gaussian: return rho_ * std::sqrt(-2.0 * std::log1p(-p));
    case KernelFamily::StudentT:
      return rho_ * std::sqrt(nu_ * std::expm1(-2.0 / nu_ * std::log1p(-p)));
    default: break;
    }
    if (p == 0.0) return 0.0;
    double hi = rho_;
    while (radial_cdf(hi) < p) hi *= 2.0;
    return bisect([&](double r) { return radial_cdf(r) - p; }, 0.0, hi, 1e-14);
  }

  /// Largest radius with H(r) >= q (0 when q exceeds the peak).
  double level_radius(double q) const {
    require_simple("level_radius");
    require(q > 0.0, "level_radius needs q > 0");
    if (q > h_max()) return 0.0;
    switch (family_) {
    case KernelFamily::Cylinder: return rho_;
    case KernelFamily::HalfBall: {
      const double c = 1.5 / (kPi * rho_ * rho_ * rho_);
      const double s = q / c;
      return std::sqrt(std::max(0.0, rho_ * rho_ - s * s));
    }
    case KernelFamily::Gaussian:
      return rho_ * std::sqrt(std::max(0.0, -2.0 * std::log(2.0 * kPi * rho_ * rho_ * q)));
    default: break;
    }
    double hi = rho_;
    while (height(hi) >= q) hi *= 2.0;
    return bisect([&](double r) { return height(r) >= q ? -1.0 : 1.0; }, 0.0, hi, 1e-14);
  }

  /// Hypograph volume lying above height q: integral of (H - q)_+.
  double mass_above(double q) const {
    require_simple("mass_above");
    require(q >= 0.0, "mass_above needs q >= 0");
    if (q == 0.0) return 1.0;
    if (q >= h_max()) return 0.0;
    const double r = level_radius(q);
    return std::max(0.0, radial_cdf(r) - q * kPi * r * r);
  }

  friend bool operator==(const HeightFunction &a, const HeightFunction &b) {
    return a.family_ == b.family_ && a.rho_ == b.rho_ && a.nu_ == b.nu_ &&
           a.weights_ == b.weights_ && a.parts_ == b.parts_;
  }

private:
  HeightFunction() = default;
  HeightFunction(KernelFamily family, double rho, double nu) : family_(family), rho_(rho), nu_(nu) {
    require(std::isfinite(rho) && rho > 0.0, "kernel scale rho must be positive");
  }

  void require_simple(const char *what) const {
    require(is_simple(), std::string(what) + " needs a single continuous kernel");
  }

  KernelFamily family_ = KernelFamily::Cylinder;
  double rho_ = 1.0;
  double nu_ = 0.0;
  std::vector<double> weights_;
  std::vector<HeightFunction> parts_;
};

/// (1 - u / (2 rho))_+, the linear stand-in for the disc correlation.
inline double correlation_linear_approx(double rho, double u) {
  require(std::isfinite(rho) && rho > 0.0, "rho must be positive");
  require(u >= 0.0, "lag must be >= 0");
  return std::max(0.0, 1.0 - u / (2.0 * rho));
}

// ---------------------------------------------------------------------------
// Geometric anisotropy

struct Anisotropy {
  double angle = 0.0;   // [0, pi)
  double stretch = 1.0; // >= 1

  Anisotropy() = default;
  Anisotropy(double angle_, double stretch_) : angle(angle_), stretch(stretch_) {
    require(std::isfinite(angle_) && angle_ >= 0.0 && angle_ < kPi,
            "anisotropy angle must lie in [0, pi)");
    require(std::isfinite(stretch_) && stretch_ >= 1.0, "anisotropy stretch must be >= 1");
  }

  bool is_identity() const { return angle == 0.0 && stretch == 1.0; }

  /// s = diag(b, 1) R(angle) s~.
  Point2 apply(const Point2 &s) const {
    const double c = std::cos(angle);
    const double n = std::sin(angle);
    return {stretch * (c * s[0] - n * s[1]), n * s[0] + c * s[1]};
  }

  Point2 invert(const Point2 &s) const {
    const double c = std::cos(angle);
    const double n = std::sin(angle);
    const double x = s[0] / stretch;
    return {c * x + n * s[1], -n * x + c * s[1]};
  }
};

inline std::vector<double> transform_coordinates(const Anisotropy &aniso,
                                                 const std::vector<double> &site) {
  require(site.size() == 2, "anisotropy is defined for d = 2 only");
  const auto p = aniso.apply({site[0], site[1]});
  return {p[0], p[1]};
}

inline double distance(const Point2 &a, const Point2 &b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

// ---------------------------------------------------------------------------
// Pair geometry

/// Volumes of the shared and residual parts of two hypographs at lag u:
/// X1 = X12 + X1\2, X2 = X12 + X2\1 with X12 ~ F_{alpha0}, residuals ~ F_{alpha_res}.
struct PairGeometry {
  double alpha = 1.0;
  double alpha0 = 1.0;
  double alpha_res = 0.0;

  SetDistribution shared(const LevySeed &seed) const { return {seed, alpha0}; }
  SetDistribution residual(const LevySeed &seed) const { return {seed, alpha_res}; }
  SetDistribution marginal(const LevySeed &seed) const { return {seed, alpha}; }
};

inline PairGeometry pair_geometry(const HeightFunction &h, double u) {
  const double c = h.correlation(u);
  return {1.0, c, 1.0 - c};
}

/// Geometry from a known correlation (used when a kernel is not at hand).
inline PairGeometry pair_geometry_from_correlation(double c) {
  require(c >= 0.0 && c <= 1.0, "correlation must lie in [0, 1]");
  return {1.0, c, 1.0 - c};
}

/// One draw of (X1, X2) through the three-component representation.
template <class Rng>
std::pair<double, double> sample_pair(const LevySeed &seed, const PairGeometry &g, Rng &rng) {
  const SetDistribution shared(seed, g.alpha0);
  const SetDistribution res(seed, g.alpha_res);
  const double y = shared.sample(rng);
  const double a = res.sample(rng);
  const double b = res.sample(rng);
  return {y + a, y + b};
}

} // namespace levyconv
