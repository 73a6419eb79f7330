#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hbm/drift.hpp"
#include "hbm/geometry.hpp"
#include "hbm/rng.hpp"

namespace hbm {

/// Driftless HBM sampled at a set of times.
struct PathGrid {
  std::vector<double> times;
  std::vector<HyperbolicPoint> points;
  HyperbolicPoint origin{0.0, 1.0};
  std::uint64_t seed = 0;
};

inline constexpr int kDefaultSubstepsPerUnit = 512;

/// Exact geometric Brownian transition y0 exp(-dt/2 + sqrt(dt) G).
inline double sample_y_exact(double y0, double dt, RngStream& rng) {
  if (!(y0 > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("sample_y_exact: need y0 > 0 and dt > 0");
  }
  return y0 * std::exp(-0.5 * dt + std::sqrt(dt) * rng.normal());
}

/// Samples driftless HBM started at z0 at each of `times`.
///
/// Y moves by exact geometric Brownian substeps. Since W1 is independent of
/// the Y path, X over a grid interval is Gaussian with variance int Y^2 ds
/// given that path; the integral is taken by the trapezoid rule on the
/// substeps and the X increment is drawn once per interval.
inline PathGrid sample_hbm_grid(const HyperbolicPoint& z0, const std::vector<double>& times,
                                int substeps_per_unit, RngStream& rng) {
  if (times.empty()) {
    throw std::invalid_argument("sample_hbm_grid: empty time grid");
  }
  if (substeps_per_unit < 100) {
    throw std::invalid_argument("sample_hbm_grid: substeps_per_unit must be >= 100");
  }
  PathGrid out;
  out.origin = z0;
  out.seed = rng.seed();
  out.times = times;
  out.points.reserve(times.size());
  double x = z0.x();
  double y = z0.y();
  double prev = 0.0;
  for (double t : times) {
    if (!(t > prev) || !std::isfinite(t)) {
      throw std::invalid_argument("sample_hbm_grid: times must be positive and increasing");
    }
    const double span = t - prev;
    const long m = std::max(1L, static_cast<long>(std::ceil(span * substeps_per_unit - 1e-9)));
    const double h = span / static_cast<double>(m);
    const double sh = std::sqrt(h);
    double int_y2 = 0.0;
    for (long k = 0; k < m; ++k) {
      const double y_next = y * std::exp(-0.5 * h + sh * rng.normal());
      int_y2 += 0.5 * h * (y * y + y_next * y_next);
      y = y_next;
    }
    x += std::sqrt(int_y2) * rng.normal();
    out.points.emplace_back(x, y);
    prev = t;
  }
  return out;
}

/// Hybrid Euler-Maruyama endpoint of the drifted SDE: X by Euler with
/// left-point Y and mu, Y by its exact transition.
inline HyperbolicPoint euler_drifted(const DriftSpec& spec, const HyperbolicPoint& z0,
                                     double t, int n_steps, RngStream& rng) {
  if (n_steps < 1 || !(t > 0.0)) {
    throw std::invalid_argument("euler_drifted: need n_steps >= 1 and t > 0");
  }
  const double h = t / n_steps;
  const double sh = std::sqrt(h);
  double x = z0.x();
  double y = z0.y();
  const bool driftless = spec.is_zero();
  for (int k = 0; k < n_steps; ++k) {
    const double g1 = rng.normal();
    const double g2 = rng.normal();
    const double mu = driftless ? 0.0 : eval_mu(spec, HyperbolicPoint(x, y));
    x += y * sh * g1 + mu * h;
    y *= std::exp(-0.5 * h + sh * g2);
  }
  return {x, y};
}

}  // namespace hbm
