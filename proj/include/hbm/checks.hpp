#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hbm/drift.hpp"
#include "hbm/estimator.hpp"
#include "hbm/kernels.hpp"
#include "hbm/quadrature.hpp"
#include "hbm/theta.hpp"

namespace hbm {

/// int_0^inf p2(t, r) 2 pi sinh r dr.
inline double normalization_integral(double t, const KernelConfig& cfg = {}) {
  const double r_end = 12.0 * std::sqrt(t) + t + 2.0;
  std::vector<double> breaks;
  const int panels = 24;
  for (int i = 0; i <= panels; ++i) breaks.push_back(r_end * i / panels);
  auto f = [&](double r) {
    return mckean_p2(t, r, cfg).value * 2.0 * std::numbers::pi * std::sinh(r);
  };
  return integrate_adaptive_scalar(f, breaks, 1e-11, 0.0, 2000).value[0];
}

/// int q2(s, z, w) q2(t, w, z2) dw by polar quadrature about z.
inline double semigroup_integral(double s, double t, const HyperbolicPoint& z,
                                 const HyperbolicPoint& z2, const KernelConfig& cfg = {}) {
  const double reach = 10.0 * std::sqrt(std::max(s, t)) + hyperbolic_distance(z, z2);
  const auto gl = gauss_legendre<double>(12);
  const int radial_panels = 40;
  const int angular = 96;
  double total = 0.0;
  for (int p = 0; p < radial_panels; ++p) {
    const double a = reach * p / radial_panels;
    const double b = reach * (p + 1) / radial_panels;
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      const double rho = a + 0.5 * (b - a) * (gl.nodes[k] + 1.0);
      const double wr = 0.5 * (b - a) * gl.weights[k] * std::sinh(rho);
      const double q_first = mckean_p2(s, rho, cfg).value;  // q2(s, z, w) y_w^2
      double ring = 0.0;
      for (int m = 0; m < angular; ++m) {
        const HyperbolicPoint w = exp_map(z, rho, 2.0 * std::numbers::pi * (m + 0.5) / angular);
        ring += q2_density(t, w, z2, cfg);
      }
      total += wr * q_first * ring * 2.0 * std::numbers::pi / angular;
    }
  }
  return total;
}

struct HeatResidual {
  double dt = 0.0;        ///< d/dt p2
  double generator = 0.0; ///< (p'' + coth r p') / 2
  double relative = 0.0;  ///< |dt - generator| / |dt|
};

/// Radial heat equation residual by central differences.
inline HeatResidual heat_residual(double t, double r) {
  KernelConfig fine;
  fine.rel_tol = 1e-13;
  fine.max_subdivisions = 2000;
  auto p = [&](double tt, double rr) { return mckean_p2(tt, std::fabs(rr), fine).value; };
  const double ht = 1e-3 * t;
  const double hr = 1e-3;
  HeatResidual out;
  out.dt = (p(t + ht, r) - p(t - ht, r)) / (2.0 * ht);
  const double p0 = p(t, r);
  const double pp = p(t, r + hr);
  const double pm = p(t, r - hr);
  const double d1 = (pp - pm) / (2.0 * hr);
  const double d2 = (pp - 2.0 * p0 + pm) / (hr * hr);
  out.generator = 0.5 * (d2 + d1 / std::tanh(r));
  out.relative = std::fabs(out.dt - out.generator) / std::fabs(out.dt);
  return out;
}

/// One quasi-random argument of the theta sweep.
struct ThetaSweepPoint {
  double t;
  HyperbolicPoint z;
  HyperbolicPoint z2;
};

/// Halton points with t in [t_lo, t_hi], x, x' in [-2, 2] and
/// y, y' in [0.25, 3].
inline std::vector<ThetaSweepPoint> theta_sweep_points(std::size_t n, double t_lo = 0.1,
                                                       double t_hi = 2.0) {
  std::vector<ThetaSweepPoint> pts;
  pts.reserve(n);
  const std::uint64_t bases[5] = {2, 3, 5, 7, 11};
  for (std::size_t i = 0; i < n; ++i) {
    double u[5];
    for (int d = 0; d < 5; ++d) u[d] = detail::radical_inverse(i + 1, bases[d]);
    pts.push_back({t_lo + (t_hi - t_lo) * u[0], HyperbolicPoint(-2.0 + 4.0 * u[1], 0.25 + 2.75 * u[2]),
                   HyperbolicPoint(-2.0 + 4.0 * u[3], 0.25 + 2.75 * u[4])});
  }
  return pts;
}

struct ThetaSweepResult {
  std::size_t samples = 0;
  double max_abs_theta = 0.0;
  double max_ratio_to_bound = 0.0;
  std::size_t over_bound = 0;      ///< |theta| > 1.5 K0 (1 + 1e-9)
  std::size_t negative_slack = 0;  ///< proof-chain steps with negative slack
  double min_ratio_slack = INFINITY;
  ThetaSweepPoint worst{0.1, HyperbolicPoint(0, 1), HyperbolicPoint(0, 1)};
  std::string worst_drift;
};

/// Sweeps theta over the builtin K0 = 1 drifts at the given points.
inline ThetaSweepResult theta_sweep(const std::vector<ThetaSweepPoint>& pts,
                                    const KernelConfig& cfg = {}) {
  const std::vector<DriftSpec> drifts = {DriftSpec::linear_y(1.0, 1.0), DriftSpec::sine_x(1.0, 1.0),
                                         DriftSpec::tanh_x(1.0, 1.0)};
  ThetaSweepResult res;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const DriftSpec& d = drifts[i % drifts.size()];
    const ThetaValue th = theta(d, p.t, p.z, p.z2, cfg);
    ++res.samples;
    const double ratio = std::fabs(th.value) / th.bound;
    if (std::fabs(th.value) > res.max_abs_theta) {
      res.max_abs_theta = std::fabs(th.value);
      res.worst = p;
      res.worst_drift = d.name();
    }
    res.max_ratio_to_bound = std::max(res.max_ratio_to_bound, ratio);
    if (ratio > 1.0 + kThetaClampWindow) ++res.over_bound;
    const ThetaChainReport chain = theta_chain_bound_check(p.t, p.z, p.z2, cfg);
    res.min_ratio_slack = std::min(res.min_ratio_slack, chain.ratio_slack);
    if (!chain.all_nonnegative()) ++res.negative_slack;
  }
  return res;
}

struct ClockStats {
  double mean_events = 0.0;
  double mean_se = 0.0;
  double p_zero = 0.0;
  double p_zero_se = 0.0;
};

inline ClockStats clock_statistics(double t, double rate, std::uint64_t n, std::uint64_t seed) {
  RunningStats events, zero;
  for (std::uint64_t i = 0; i < n; ++i) {
    RngStream rng(seed, make_stream_id(StreamPurpose::kClock, i));
    const PoissonClock c = sample_clock(t, rate, rng);
    events.add(static_cast<double>(c.size()));
    zero.add(c.size() == 0 ? 1.0 : 0.0);
  }
  return {events.mean, events.std_error(), zero.mean, zero.std_error()};
}

}  // namespace hbm
