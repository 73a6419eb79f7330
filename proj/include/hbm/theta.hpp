#pragma once

#include <cmath>

#include "hbm/drift.hpp"
#include "hbm/geometry.hpp"
#include "hbm/kernels.hpp"

namespace hbm {

/// Drift weight theta(t, z, z') = mu(z) d/dx log q2(t, z, z').
struct ThetaValue {
  double value = 0.0;
  double bound = 0.0;  ///< 3 K0 / 2
  /// 2 y |x - x'| / (|x - x'|^2 + (y + y')^2), always in [0, 1].
  double geometric_factor = 0.0;
  /// True when value was pulled back onto +-bound after a tiny excursion.
  bool clamped = false;
  /// True when |value| exceeds the bound by more than the clamp window.
  bool exceeds_bound = false;
};

/// Relative excess over 3 K0 / 2 that is attributed to quadrature noise and
/// clamped. Anything larger is returned unchanged and flagged.
inline constexpr double kThetaClampWindow = 1e-9;

inline double geometric_factor(const HyperbolicPoint& z, const HyperbolicPoint& z2) {
  const double dx = std::fabs(z.x() - z2.x());
  const double sy = z.y() + z2.y();
  return 2.0 * z.y() * dx / (dx * dx + sy * sy);
}

inline ThetaValue theta(const DriftSpec& spec, double t, const HyperbolicPoint& z,
                        const HyperbolicPoint& z2, const KernelConfig& cfg = {}) {
  ThetaValue out;
  out.bound = 1.5 * spec.k0();
  out.geometric_factor = geometric_factor(z, z2);
  const double mu = eval_mu(spec, z);
  if (mu == 0.0 || z.x() == z2.x()) {
    detail::require_time(t, "theta");
    return out;
  }
  out.value = mu * grad_x_log_q2(t, z, z2, cfg);
  const double excess = std::fabs(out.value) - out.bound;
  if (excess > 0.0) {
    if (excess <= kThetaClampWindow * out.bound) {
      out.value = std::copysign(out.bound, out.value);
      out.clamped = true;
    } else {
      out.exceeds_bound = true;
    }
  }
  return out;
}

/// Measured slack of each step in the chain that bounds |theta| by 3 K0 / 2.
/// A negative slack means the step fails at this argument.
struct ThetaChainReport {
  /// 3/2 / (1 + cosh r) - e^t 2 pi p4 / p2: the kernel ratio step.
  double ratio_slack = 0.0;
  /// y / (y + y') - geometric_factor: the AM-GM step.
  double geometric_slack = 0.0;
  /// 1 - y / (y + y').
  double unit_slack = 0.0;
  double ratio = 0.0;  ///< e^t 2 pi p4 (1 + cosh r) / p2
  double geometric_factor = 0.0;

  bool all_nonnegative() const {
    return ratio_slack >= 0.0 && geometric_slack >= 0.0 && unit_slack >= 0.0;
  }
};

inline ThetaChainReport theta_chain_bound_check(double t, const HyperbolicPoint& z,
                                                const HyperbolicPoint& z2,
                                                const KernelConfig& cfg = {}) {
  ThetaChainReport rep;
  const double r = hyperbolic_distance(z, z2);
  const double one_plus_cosh = 2.0 + cosh_distance_minus_one(z, z2);
  // e^t 2 pi p4 / p2 = -(d/dr log p2) / sinh r, with the r -> 0 limit taken
  // from the slope of d/dr log p2.
  const auto d = mckean_log_derivative(t, r, cfg);
  double ratio_kernel;
  if (r > 0.0) {
    ratio_kernel = -d.dlog_dr / std::sinh(r);
  } else {
    const double h = 1e-6 * std::sqrt(t);
    ratio_kernel = -mckean_log_derivative(t, h, cfg).dlog_dr / std::sinh(h);
  }
  rep.ratio = ratio_kernel * one_plus_cosh;
  rep.ratio_slack = 1.5 / one_plus_cosh - ratio_kernel;
  rep.geometric_factor = geometric_factor(z, z2);
  const double share = z.y() / (z.y() + z2.y());
  rep.geometric_slack = share - rep.geometric_factor;
  rep.unit_slack = 1.0 - share;
  return rep;
}

}  // namespace hbm
