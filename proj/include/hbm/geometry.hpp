#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hbm {

/// A point (x, y) of the upper half-plane, y > 0.
class HyperbolicPoint {
 public:
  HyperbolicPoint(double x, double y) : x_(x), y_(y) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw std::invalid_argument("HyperbolicPoint: non-finite coordinate");
    }
    if (!(y > 0.0)) {
      throw std::invalid_argument("HyperbolicPoint: y must be > 0, got " +
                                  std::to_string(y));
    }
  }

  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }

  friend bool operator==(const HyperbolicPoint&,
                         const HyperbolicPoint&) = default;

 private:
  double x_;
  double y_;
};

/// cosh(d(z, w)) - 1, computed without cancellation.
inline double cosh_distance_minus_one(const HyperbolicPoint& z,
                                      const HyperbolicPoint& w) {
  const double dx = z.x() - w.x();
  const double dy = z.y() - w.y();
  return (dx * dx + dy * dy) / (2.0 * z.y() * w.y());
}

/// Hyperbolic distance on H^2.
inline double hyperbolic_distance(const HyperbolicPoint& z,
                                  const HyperbolicPoint& w) {
  const double d = cosh_distance_minus_one(z, w);
  // arcosh(1 + d) in the form that stays accurate as d -> 0.
  return std::log1p(d + std::sqrt(d * (d + 2.0)));
}

/// sinh(d(z, w)), accurate for nearby points.
inline double sinh_distance(const HyperbolicPoint& z,
                            const HyperbolicPoint& w) {
  const double d = cosh_distance_minus_one(z, w);
  return std::sqrt(d * (d + 2.0));
}

/// Geodesic polar coordinates (rho, phi) about a centre.
struct PolarCoords {
  double rho;
  double phi;
};

/// Point at hyperbolic distance `rho` from `centre` in direction `phi`.
/// exp_map_cs takes cos(phi) and sin(phi) directly.
///
/// Built from the Cayley map of the disk point tanh(rho/2) e^{i phi}; phi = 0
/// points along +y at the centre, phi = pi/2 along -x.
inline HyperbolicPoint exp_map_cs(const HyperbolicPoint& centre, double rho,
                                  double c, double sn) {
  const double s = std::tanh(0.5 * rho);
  // |1 - zeta|^2 written to avoid cancellation when zeta -> 1.
  const double denom = (1.0 - s) * (1.0 - s) + 2.0 * s * (1.0 - c);
  const double sech2 = 1.0 / (std::cosh(0.5 * rho) * std::cosh(0.5 * rho));
  const double re = -2.0 * s * sn / denom;
  const double im = sech2 / denom;
  return {centre.x() + centre.y() * re, centre.y() * im};
}

inline HyperbolicPoint exp_map(const HyperbolicPoint& centre, double rho,
                               double phi) {
  return exp_map_cs(centre, rho, std::cos(phi), std::sin(phi));
}

/// Inverse of exp_map.
inline PolarCoords log_map(const HyperbolicPoint& centre,
                           const HyperbolicPoint& p) {
  const double a = (p.x() - centre.x()) / centre.y();
  const double b = p.y() / centre.y();
  // zeta = (Z - i) / (Z + i) with Z = a + i b.
  const double den = a * a + (b + 1.0) * (b + 1.0);
  const double re = (a * a + b * b - 1.0) / den;
  const double im = -2.0 * a / den;
  const double rho = hyperbolic_distance(centre, p);
  // Cayley map sends phi = 0 to zeta on the positive real axis.
  const double phi = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
  return {rho, phi};
}

}  // namespace hbm
