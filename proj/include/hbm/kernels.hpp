#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "hbm/errors.hpp"
#include "hbm/geometry.hpp"
#include "hbm/quad_math.hpp"
#include "hbm/quadrature.hpp"

namespace hbm {

/// Accuracy and truncation controls for the heat-kernel integrals.
struct KernelConfig {
  double rel_tol = 1e-8;
  double b_max_factor = 8.0;
  /// Smallest time accepted by gruet_pn.
  double t_min = 0.1;
  int max_subdivisions = 200;

  void validate() const {
    if (!(rel_tol > 0.0 && rel_tol <= 1e-3)) {
      throw ConfigError("rel_tol", "must lie in (0, 1e-3]");
    }
    if (!(b_max_factor >= 4.0)) {
      throw ConfigError("b_max_factor", "must be >= 4");
    }
    if (!(t_min > 0.0)) {
      throw ConfigError("t_min", "must be > 0");
    }
    if (max_subdivisions < 1) {
      throw ConfigError("max_subdivisions", "must be >= 1");
    }
  }
};

/// Heat kernel p_n(t, r) with respect to the hyperbolic volume.
struct KernelValue {
  double value;
  double t;
  double r;
  int n;
};

/// log p2 and its radial derivative, the form consumed by the drift weight.
struct RadialLogDerivative {
  double log_p2;
  double dlog_dr;  ///< d/dr log p2(t, r)
};

namespace detail {

inline void require_time(double t, const char* who) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw std::invalid_argument(std::string(who) + ": t must be finite and > 0");
  }
}

inline void require_radius(double r, const char* who) {
  if (!(r >= 0.0) || !std::isfinite(r)) {
    throw std::invalid_argument(std::string(who) + ": r must be finite and >= 0");
  }
}

/// coth(a) - 1/a for a > 0.
inline double coth_minus_inverse(double a) {
  if (a < 0.1) {
    const double a2 = a * a;
    return a * (1.0 / 3.0 +
                a2 * (-1.0 / 45.0 +
                      a2 * (2.0 / 945.0 + a2 * (-1.0 / 4725.0 + a2 * (2.0 / 93555.0)))));
  }
  if (a > 20.0) {
    return 1.0 - 1.0 / a;
  }
  return 1.0 / std::tanh(a) - 1.0 / a;
}

/// The McKean integral after b = r + u^2, scaled by exp(r^2 / 2t).
///
/// p2(t, r) = exp(log_prefactor) * integral and
/// d/dr p2(t, r) = exp(log_prefactor) * d_integral.
struct McKeanIntegral {
  double log_prefactor;
  double integral;
  double d_integral;
};

inline McKeanIntegral mckean_integral(double t, double r,
                                      const KernelConfig& cfg) {
  // Integrand in u with the endpoint singularity removed:
  //   2u b exp(-u^2 (2r + u^2) / 2t) / sqrt(2 sinh(r + u^2/2) sinh(u^2/2)).
  // cosh b - cosh r is written as a product of sinh's so that nothing cancels
  // near u = 0.
  auto integrand = [t, r](double u) -> std::array<double, 2> {
    const double u2 = u * u;
    const double b = r + u2;
    const double a = r + 0.5 * u2;
    const double expo = u2 * (2.0 * r + u2) / (2.0 * t);
    if (expo > 745.0) {
      return {0.0, 0.0};
    }
    const double g = 2.0 * u * b * std::exp(-expo) /
                     std::sqrt(2.0 * std::sinh(a) * std::sinh(0.5 * u2));
    // d/dr log of the unscaled integrand: 1/b - coth(a)/2 - b/t, with
    // 1/b - 1/(2a) folded into r / (b (2r + u^2)).
    const double bracket =
        r / (b * (2.0 * r + u2)) - 0.5 * coth_minus_inverse(a) - b / t;
    return {g, g * bracket};
  };

  const double log_pref = 0.5 * std::log(2.0) - t / 8.0 -
                          1.5 * std::log(2.0 * std::numbers::pi * t) -
                          r * r / (2.0 * t);

  // Truncation b_max - r in u^2 units.
  double span = cfg.b_max_factor * std::sqrt(t) +
                std::sqrt(2.0 * t * std::log(1.0 / cfg.rel_tol));
  for (int attempt = 0; attempt < 12; ++attempt) {
    const double u_max = std::sqrt(span);
    std::vector<double> breaks{0.0};
    for (double k : {0.25, 1.0, 4.0, 16.0, 64.0}) {
      // u^2 (2r + u^2) / 2t = k
      const double u2 = 2.0 * t * k / (r + std::sqrt(r * r + 2.0 * t * k));
      const double u = std::sqrt(u2);
      if (u < u_max) {
        breaks.push_back(u);
      }
    }
    breaks.push_back(u_max);
    const auto res = integrate_adaptive<2>(integrand, breaks, 0.25 * cfg.rel_tol,
                                           0.0, cfg.max_subdivisions);
    // Gaussian envelope bound on the discarded tail b > b_max, scaled:
    //   t exp(-(b_max^2 - r^2) / 2t) / sqrt(cosh b_max - cosh r).
    const double b_max = r + span;
    const double tail =
        t * std::exp(-span * (2.0 * r + span) / (2.0 * t)) /
        std::sqrt(2.0 * std::sinh(r + 0.5 * span) * std::sinh(0.5 * span));
    if (tail <= 0.1 * cfg.rel_tol * res.value[0] || !std::isfinite(b_max)) {
      // At r = 0 the r / (b (2r + u^2)) spike has collapsed onto u = 0 and
      // no longer cancels the rest; p2 is even in r, so the slope is 0.
      return {log_pref, res.value[0], r == 0.0 ? 0.0 : res.value[1]};
    }
    span *= 2.0;
  }
  throw NonConvergence("mckean_p2: truncation point did not certify the tail");
}

}  // namespace detail

/// McKean's kernel p2(t, r).
inline KernelValue mckean_p2(double t, double r, const KernelConfig& cfg = {}) {
  detail::require_time(t, "mckean_p2");
  detail::require_radius(r, "mckean_p2");
  const auto m = detail::mckean_integral(t, r, cfg);
  return {std::exp(m.log_prefactor) * m.integral, t, r, 2};
}

/// log p2 and d/dr log p2 from one pass over the McKean integral.
inline RadialLogDerivative mckean_log_derivative(double t, double r,
                                                 const KernelConfig& cfg = {}) {
  detail::require_time(t, "mckean_log_derivative");
  detail::require_radius(r, "mckean_log_derivative");
  const auto m = detail::mckean_integral(t, r, cfg);
  return {m.log_prefactor + std::log(m.integral), m.d_integral / m.integral};
}

namespace detail {

struct GruetSum {
  double value = 0.0;      ///< lobe sum, without the constant prefactor
  double condition = 0.0;  ///< sum |lobe| / |sum|
  long lobes = 0;
};

/// Sum of the Gruet lobes over [0, lobes t] in precision Real. Lobe k is
/// integrated with exp((pi^2 - (k t)^2) / 2t) factored out; the factor is
/// formed in Real because a double ulp in it is amplified by the full
/// cancellation between lobes.
template <class Real>
GruetSum gruet_lobe_sum(int n, double t, double r, long lobes, double rel_tol) {
  using qmath::cosh;
  using qmath::exp;
  using qmath::fabs;
  using qmath::pow;
  using qmath::sin;
  using qmath::sinh;
  static const GaussLegendreRule<Real> rule = gauss_legendre<Real>(20);
  const Real tq = t;
  const Real pi = pi_value<Real>();
  const Real power = Real(n + 1) / Real(2);
  const Real cosh_r = cosh(Real(r));
  auto lobe = [&](long k, const Real& abs_tol) {
    const Real b0 = Real(k) * tq;
    auto f = [&](const Real& b) -> Real {
      const Real env = exp(-(b * b - b0 * b0) / (Real(2) * tq));
      return env * sinh(b) * sin(pi * b / tq) / pow(cosh(b) + cosh_r, power);
    };
    return integrate_gl_adaptive<Real>(f, b0, b0 + tq, rule, abs_tol, 40);
  };
  auto lobe_scale = [&](long k) -> Real {
    const Real b0 = Real(k) * tq;
    return exp((pi * pi - b0 * b0) / (Real(2) * tq));
  };
  // Pass 1: crude lobes to size the sum. Pass 2: per-lobe absolute
  // tolerance from that size.
  CompensatedSum<Real> rough;
  for (long k = 0; k < lobes; ++k) {
    const Real scale = lobe_scale(k);
    rough.add(lobe(k, Real(1e-20)) * scale);
  }
  const Real target = fabs(rough.value()) * Real(rel_tol) / (Real(20) * Real(lobes));
  CompensatedSum<Real> sum;
  Real abs_sum = 0;
  for (long k = 0; k < lobes; ++k) {
    const Real scale = lobe_scale(k);
    const Real v = lobe(k, target / scale) * scale;
    sum.add(v);
    abs_sum += fabs(v);
  }
  const Real total = sum.value();
  return {static_cast<double>(total), static_cast<double>(abs_sum / fabs(total)), lobes};
}

}  // namespace detail

/// Gruet's oscillatory representation of p_n(t, r), n >= 2.
///
/// The integrand changes sign at b = k t. Each lobe [k t, (k+1) t] is
/// integrated separately with its envelope factored out, and lobes are
/// accumulated with compensated summation. The cancellation between lobes
/// grows like exp((pi^2 + r^2) / 2t). Lobes are summed in __float128 and
/// redone with 50 decimal digits when that is not enough for cfg.rel_tol.
/// Times below cfg.t_min are refused.
inline KernelValue gruet_pn(int n, double t, double r,
                            const KernelConfig& cfg = {}) {
  if (n < 2) {
    throw std::invalid_argument("gruet_pn: n must be >= 2");
  }
  detail::require_time(t, "gruet_pn");
  detail::require_radius(r, "gruet_pn");
  if (t < cfg.t_min) {
    throw TimeTooSmall("gruet_pn: t = " + std::to_string(t) + " below t_min = " +
                       std::to_string(cfg.t_min));
  }
  using wide = boost::multiprecision::cpp_bin_float_50;
  const double log_c = -double(n - 1) * double(n - 1) * t / 8.0 -
                       std::log(std::numbers::pi) -
                       0.5 * n * std::log(2.0 * std::numbers::pi) -
                       0.5 * std::log(t) + std::lgamma(0.5 * (n + 1));
  // Rounding error of the lobe sum is about condition * eps * 1e3.
  auto resolved = [&](const detail::GruetSum& s, double eps) {
    return s.value > 0.0 && s.condition * 1e3 * eps <= cfg.rel_tol;
  };

  // Truncation: beyond B the integrand is bounded by exp((pi^2 - b^2)/2t) so
  // the tail is at most C exp((pi^2 - B^2) / 2t) t / B.
  double b_end = std::numbers::pi +
                 std::sqrt(2.0 * t * (std::log(1.0 / cfg.rel_tol) + 60.0));
  for (int attempt = 0; attempt < 8; ++attempt) {
    const long lobes = static_cast<long>(std::ceil(b_end / t));
    detail::GruetSum s = detail::gruet_lobe_sum<qmath::quad>(n, t, r, lobes, cfg.rel_tol);
    if (!resolved(s, static_cast<double>(qmath::kEpsilon))) {
      s = detail::gruet_lobe_sum<wide>(n, t, r, lobes, cfg.rel_tol);
      if (!resolved(s, static_cast<double>(std::numeric_limits<wide>::epsilon()))) {
        throw NonConvergence("gruet_pn: lobe cancellation exceeds working precision "
                             "(condition " + std::to_string(s.condition) + ")");
      }
    }
    const double b_last = double(lobes) * t;
    const double tail = std::exp(log_c + (std::numbers::pi * std::numbers::pi -
                                          b_last * b_last) / (2.0 * t)) * t / b_last;
    const double result = std::exp(log_c) * s.value;
    if (tail <= 0.01 * cfg.rel_tol * result) {
      return {result, t, r, n};
    }
    b_end *= 1.5;
  }
  throw NonConvergence("gruet_pn: truncation did not converge");
}

/// Milson's recursion p4 = -e^{-t} / (2 pi sinh r) d/dr p2.
///
/// The radial derivative is a Richardson-extrapolated central difference of
/// mckean_p2 with h = max(1e-4, 1e-3 r); p2 is even in r so the stencil may
/// cross r = 0.
inline KernelValue milson_p4(double t, double r, const KernelConfig& cfg = {}) {
  detail::require_time(t, "milson_p4");
  detail::require_radius(r, "milson_p4");
  if (r < 1e-6) {
    throw DegenerateRadius("milson_p4: r < 1e-6; use gruet_pn(4, t, r)");
  }
  KernelConfig fine = cfg;
  fine.rel_tol = std::min(cfg.rel_tol, 1e-13);
  fine.max_subdivisions = std::max(cfg.max_subdivisions, 400);
  auto p2 = [&](double rr) { return mckean_p2(t, std::fabs(rr), fine).value; };
  const double h = std::max(1e-4, 1e-3 * r);
  const double d1 = (p2(r + h) - p2(r - h)) / (2.0 * h);
  const double d2 = (p2(r + 0.5 * h) - p2(r - 0.5 * h)) / h;
  const double deriv = (4.0 * d2 - d1) / 3.0;
  const double value =
      -std::exp(-t) / (2.0 * std::numbers::pi * std::sinh(r)) * deriv;
  return {value, t, r, 4};
}

/// d/dx log q2(t, z, z2), derivative in the x coordinate of the start point.
///
/// Chain rule through r = d(z, z2): dr/dx = (x - x') / (y y' sinh r), so the
/// result is (x - x') / (y y') * (d/dr log p2) / sinh r. Exactly zero when
/// x == x'.
inline double grad_x_log_q2(double t, const HyperbolicPoint& z,
                            const HyperbolicPoint& z2,
                            const KernelConfig& cfg = {}) {
  detail::require_time(t, "grad_x_log_q2");
  const double dx = z.x() - z2.x();
  if (dx == 0.0) {
    return 0.0;
  }
  const double r = hyperbolic_distance(z, z2);
  const double sh = sinh_distance(z, z2);
  const auto d = mckean_log_derivative(t, r, cfg);
  return dx / (z.y() * z2.y()) * d.dlog_dr / sh;
}

/// Transition density of driftless HBM w.r.t. dx' dy': p2(t, r) / y'^2.
inline double q2_density(double t, const HyperbolicPoint& z,
                         const HyperbolicPoint& z2,
                         const KernelConfig& cfg = {}) {
  detail::require_time(t, "q2_density");
  const double r = hyperbolic_distance(z, z2);
  return mckean_p2(t, r, cfg).value / (z2.y() * z2.y());
}

}  // namespace hbm
