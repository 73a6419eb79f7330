#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "hbm/drift.hpp"
#include "hbm/errors.hpp"
#include "hbm/geometry.hpp"
#include "hbm/kernels.hpp"
#include "hbm/parallel.hpp"
#include "hbm/quadrature.hpp"
#include "hbm/theta.hpp"

namespace hbm {

/// Quadrature for the space-time convolutions
///   int_0^t int a(t - s, w) b(s, w) dw ds
/// where a(tau, .) concentrates at z and b(s, .) at z' as the time goes to 0.
///
/// The time axis is split at t/2. On each half the short time u is
/// (t/2) xi^2 with Gauss-Legendre nodes in xi, and the space integral runs
/// over geodesic polar coordinates about the point where the short-time
/// factor concentrates, with radius measured in units of sqrt(u).
struct ConvolutionQuadSpec {
  int time_nodes = 12;  ///< per half
  std::vector<double> radial_breaks{0.0, 0.75, 1.5, 2.5, 3.5, 5.0, 7.0};
  int radial_points = 5;  ///< per radial panel
  int angular_points = 32;

  /// Tables of the intermediate densities used by density_parametrix.
  int table_time_nodes = 8;  ///< Chebyshev nodes in sqrt(u)
  double table_extent = 7.0;  ///< scaled radius rho / sqrt(u)
  double table_step = 0.25;
  int table_angular = 32;  ///< must be even

  /// McKean lookup tables: node spacing sqrt(tau) * kernel_step.
  double kernel_step = 1.0 / 24.0;
  KernelConfig kernel{};
  unsigned workers = 1;

  void validate() const {
    if (time_nodes < 1) throw ConfigError("time_nodes", "must be >= 1");
    if (radial_breaks.size() < 2 || radial_breaks.front() != 0.0 ||
        !std::is_sorted(radial_breaks.begin(), radial_breaks.end())) {
      throw ConfigError("radial_breaks", "must start at 0 and increase");
    }
    if (radial_points < 1) throw ConfigError("radial_points", "must be >= 1");
    if (angular_points < 4) throw ConfigError("angular_points", "must be >= 4");
    if (table_time_nodes < 2) throw ConfigError("table_time_nodes", "must be >= 2");
    if (!(table_extent > 0.0) || !(table_step > 0.0) || table_step > table_extent) {
      throw ConfigError("table_step", "need 0 < table_step <= table_extent");
    }
    if (table_angular < 4 || table_angular % 2 != 0) {
      throw ConfigError("table_angular", "must be even and >= 4");
    }
    if (!(kernel_step > 0.0) || kernel_step > 0.5) {
      throw ConfigError("kernel_step", "must lie in (0, 0.5]");
    }
    kernel.validate();
  }

  /// Cheap settings for smoke tests and n = 3 terms.
  static ConvolutionQuadSpec coarse() {
    ConvolutionQuadSpec q;
    q.time_nodes = 6;
    q.radial_breaks = {0.0, 1.0, 2.0, 3.5, 5.0, 6.5};
    q.radial_points = 4;
    q.angular_points = 16;
    q.table_time_nodes = 6;
    q.table_step = 0.35;
    q.table_angular = 16;
    q.kernel_step = 1.0 / 16.0;
    return q;
  }
};

/// log p2(tau, r) and d/dr log p2 on a uniform r grid for one tau, with
/// cubic Hermite interpolation of the log and cubic Lagrange interpolation
/// of the derivative. Beyond r_max the kernel is below e^{-745} and is
/// reported as zero.
class KernelTable {
 public:
  KernelTable(double tau, const KernelConfig& cfg, double step)
      : tau_(tau), dr_(std::sqrt(tau) * step) {
    r_max_ = std::min(std::sqrt(1490.0 * tau), 30.0 + 12.0 * std::sqrt(tau));
    const std::size_t n = static_cast<std::size_t>(std::ceil(r_max_ / dr_)) + 3;
    log_p2_.resize(n);
    dlog_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = mckean_log_derivative(tau, dr_ * static_cast<double>(i), cfg);
      log_p2_[i] = d.log_p2;
      dlog_[i] = d.dlog_dr;
    }
  }

  double tau() const noexcept { return tau_; }
  double r_max() const noexcept { return r_max_; }

  RadialLogDerivative eval(double r) const {
    if (!(r <= r_max_)) {
      return {-std::numeric_limits<double>::infinity(), -r / tau_};
    }
    const double pos = r / dr_;
    const std::size_t i = std::min(static_cast<std::size_t>(pos), log_p2_.size() - 3);
    const double u = pos - static_cast<double>(i);
    // Hermite for log p2.
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
    const double h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u);
    const double h11 = u * u * (u - 1);
    const double lp = h00 * log_p2_[i] + h10 * dr_ * dlog_[i] + h01 * log_p2_[i + 1] +
                      h11 * dr_ * dlog_[i + 1];
    // Lagrange on nodes i-1 .. i+2; d/dr log p2 is odd in r.
    const double dm1 = i == 0 ? -dlog_[1] : dlog_[i - 1];
    const double a = u + 1, b = u, c = u - 1, d = u - 2;
    const double dl = -dm1 * b * c * d / 6.0 + dlog_[i] * a * c * d / 2.0 -
                      dlog_[i + 1] * a * b * d / 2.0 + dlog_[i + 2] * a * b * c / 6.0;
    return {lp, dl};
  }

 private:
  double tau_;
  double dr_;
  double r_max_;
  std::vector<double> log_p2_;
  std::vector<double> dlog_;
};

/// Thread-safe map tau -> KernelTable. Tables are immutable once built and
/// their contents do not depend on build order.
class KernelCache {
 public:
  KernelCache(const KernelConfig& cfg, double step) : cfg_(cfg), step_(step) {}

  const KernelTable& get(double tau) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = tables_.find(tau); it != tables_.end()) return *it->second;
    }
    auto table = std::make_unique<KernelTable>(tau, cfg_, step_);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = tables_.emplace(tau, std::move(table));
    return *it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return tables_.size();
  }

 private:
  KernelConfig cfg_;
  double step_;
  mutable std::mutex mutex_;
  std::map<double, std::unique_ptr<KernelTable>> tables_;
};

/// h1(t, z, z') = mu(z) d/dx q2(t, z, z') / y'^2 = theta q2 / y'^2.
inline double h1(const DriftSpec& spec, double t, const HyperbolicPoint& z,
                 const HyperbolicPoint& z2, const KernelConfig& cfg = {}) {
  const ThetaValue th = theta(spec, t, z, z2, cfg);
  if (th.value == 0.0) return 0.0;
  return th.value * q2_density(t, z, z2, cfg);
}

/// (3 K0 / 2)^n q2 / y'^2 t^{n-1} / (n-1)!.
inline double hn_majorant(int n, double t, double k0, double q2_over_ysq) {
  if (n < 1 || !(t > 0.0)) throw std::invalid_argument("hn_majorant: need n >= 1, t > 0");
  return std::exp(n * std::log(1.5 * k0) + (n - 1) * std::log(t) - std::lgamma(n)) *
         q2_over_ysq;
}

/// Bound on the discarded terms of the truncated density,
///   sum_{n > n_terms} (3 K0 t / 2)^n / n!  q2(t, z, z') / y'^2,
/// from integrating the majorant of h_n against the heat kernel.
inline double parametrix_remainder_bound(double t, double k0, int n_terms, double q2_over_ysq) {
  const double a = 1.5 * k0 * t;
  double term = 1.0;  // a^n / n!
  for (int n = 1; n <= n_terms; ++n) term *= a / n;
  double tail = 0.0;
  for (int n = n_terms + 1; n < n_terms + 400; ++n) {
    term *= a / n;
    tail += term;
    if (term < 1e-18 * tail) break;
  }
  return tail * q2_over_ysq;
}

struct SeriesTerm {
  int n = 1;
  double value = 0.0;
  double majorant = 0.0;
};

namespace detail {

struct ConvolutionNodes {
  std::vector<double> xi, xi_w;
  std::vector<double> zeta, zeta_w;
  std::vector<double> cos_phi, sin_phi;
  double phi_w = 0.0;

  explicit ConvolutionNodes(const ConvolutionQuadSpec& q) {
    const auto gt = gauss_legendre<double>(q.time_nodes);
    for (std::size_t k = 0; k < gt.nodes.size(); ++k) {
      xi.push_back(0.5 * (gt.nodes[k] + 1.0));
      xi_w.push_back(0.5 * gt.weights[k]);
    }
    const auto gr = gauss_legendre<double>(q.radial_points);
    for (std::size_t p = 0; p + 1 < q.radial_breaks.size(); ++p) {
      const double a = q.radial_breaks[p];
      const double b = q.radial_breaks[p + 1];
      for (std::size_t k = 0; k < gr.nodes.size(); ++k) {
        zeta.push_back(a + 0.5 * (b - a) * (gr.nodes[k] + 1.0));
        zeta_w.push_back(0.5 * (b - a) * gr.weights[k]);
      }
    }
    const int m = q.angular_points;
    for (int k = 0; k < m; ++k) {
      const double phi = 2.0 * std::numbers::pi * (k + 0.5) / m;
      cos_phi.push_back(std::cos(phi));
      sin_phi.push_back(std::sin(phi));
    }
    phi_w = 2.0 * std::numbers::pi / m;
  }
};

/// int_0^t int a(t - s, w) b(s, w) dw ds (dw Lebesgue).
template <class A, class B>
double convolve(double t, const HyperbolicPoint& z, const HyperbolicPoint& z2, const A& a,
                const B& b, const ConvolutionNodes& nd) {
  double total = 0.0;
  for (int half = 0; half < 2; ++half) {
    // half 0: s short, b concentrated at z2. half 1: t - s short, a at z.
    const HyperbolicPoint& centre = half == 0 ? z2 : z;
    for (std::size_t k = 0; k < nd.xi.size(); ++k) {
      const double xi = nd.xi[k];
      const double u_short = 0.5 * t * xi * xi;
      const double u_long = t - u_short;
      const double du = t * xi * nd.xi_w[k];
      const double scale = std::sqrt(u_short);
      double inner = 0.0;
      for (std::size_t j = 0; j < nd.zeta.size(); ++j) {
        const double rho = scale * nd.zeta[j];
        const double wr = scale * nd.zeta_w[j] * std::sinh(rho);
        double ring = 0.0;
        for (std::size_t m = 0; m < nd.cos_phi.size(); ++m) {
          const HyperbolicPoint w = exp_map_cs(centre, rho, nd.cos_phi[m], nd.sin_phi[m]);
          const double v = half == 0 ? a(u_long, w) * b(u_short, w) : a(u_short, w) * b(u_long, w);
          ring += v * w.y() * w.y();
        }
        inner += wr * ring;
      }
      total += du * nd.phi_w * inner;
    }
  }
  return total;
}

inline double q_from_table(const KernelTable& tab, const HyperbolicPoint& a,
                           const HyperbolicPoint& b) {
  const auto e = tab.eval(hyperbolic_distance(a, b));
  return std::exp(e.log_p2) / (b.y() * b.y());
}

inline double h1_from_table(const DriftSpec& spec, const KernelTable& tab,
                            const HyperbolicPoint& a, const HyperbolicPoint& b) {
  const double dx = a.x() - b.x();
  if (dx == 0.0) return 0.0;
  const double mu = eval_mu(spec, a);
  if (mu == 0.0) return 0.0;
  const double d = cosh_distance_minus_one(a, b);
  const double r = std::log1p(d + std::sqrt(d * (d + 2.0)));
  const double sh = std::sqrt(d * (d + 2.0));
  const auto e = tab.eval(r);
  if (e.log_p2 == -std::numeric_limits<double>::infinity()) return 0.0;
  return mu * dx / (a.y() * b.y()) * e.dlog_dr / sh * std::exp(e.log_p2) / (b.y() * b.y());
}

/// u g(u, exp_map(z, xi sqrt(u), phi)) tabulated at Chebyshev nodes in
/// sqrt(u) on (0, sqrt(t)], a uniform xi grid and a uniform phi grid, for
/// one intermediate density g(u, .) of the process started at z.
class PolarDensityTable {
 public:
  template <class Fill>
  PolarDensityTable(const HyperbolicPoint& z, double t, const ConvolutionQuadSpec& q,
                    const Fill& fill)
      : z_(z),
        n_xi_(static_cast<int>(std::floor(q.table_extent / q.table_step + 1e-9)) + 1),
        n_phi_(q.table_angular),
        step_(q.table_step),
        extent_(q.table_step * (n_xi_ - 1)) {
    const int m = q.table_time_nodes;
    for (int k = 0; k < m; ++k) {
      const double c = std::cos(std::numbers::pi * (2 * k + 1) / (2.0 * m));
      root_u_.push_back(0.5 * std::sqrt(t) * (1.0 + c));
      bary_.push_back(((k % 2) ? -1.0 : 1.0) * std::sin(std::numbers::pi * (2 * k + 1) / (2.0 * m)));
    }
    values_.assign(static_cast<std::size_t>(m) * n_xi_ * n_phi_, 0.0);
    // Jobs: (k, i, j) with the centre (i = 0) done once per k.
    struct Job {
      int k, i, j;
    };
    std::vector<Job> jobs;
    for (int k = 0; k < m; ++k) {
      jobs.push_back({k, 0, 0});
      for (int i = 1; i < n_xi_; ++i)
        for (int j = 0; j < n_phi_; ++j) jobs.push_back({k, i, j});
    }
    parallel_blocks(jobs.size(), q.workers, [&](std::size_t idx) {
      const Job& jb = jobs[idx];
      const double u = root_u_[jb.k] * root_u_[jb.k];
      const double rho = jb.i * step_ * root_u_[jb.k];
      const HyperbolicPoint w = exp_map(z_, rho, phi(jb.j));
      const double v = u * fill(u, w);
      if (jb.i == 0) {
        for (int j = 0; j < n_phi_; ++j) at(jb.k, 0, j) = v;
      } else {
        at(jb.k, jb.i, jb.j) = v;
      }
    });
  }

  double operator()(double u, const HyperbolicPoint& w) const {
    const PolarCoords pc = log_map(z_, w);
    const double root_u = std::sqrt(u);
    const double xi = pc.rho / root_u;
    if (xi >= extent_) return 0.0;
    double ph = pc.phi / (2.0 * std::numbers::pi / n_phi_);
    if (ph < 0) ph += n_phi_;
    const int j0 = static_cast<int>(std::floor(ph));
    const double fj = ph - j0;
    const double xs = xi / step_;
    const int i0 = static_cast<int>(std::floor(xs));
    const double fi = xs - i0;
    double wi[4], wj[4];
    cubic_weights(fi, wi);
    cubic_weights(fj, wj);
    // Barycentric interpolation in sqrt(u).
    double num = 0.0, den = 0.0;
    const int m = static_cast<int>(root_u_.size());
    int exact = -1;
    for (int k = 0; k < m; ++k) {
      if (root_u == root_u_[k]) exact = k;
    }
    for (int k = 0; k < m; ++k) {
      if (exact >= 0 && k != exact) continue;
      double v = 0.0;
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          v += wi[a] * wj[b] * node(k, i0 - 1 + a, j0 - 1 + b);
        }
      }
      if (exact >= 0) return v / u;
      const double c = bary_[k] / (root_u - root_u_[k]);
      num += c * v;
      den += c;
    }
    return num / den / u;
  }

 private:
  static double phi_step(int n) { return 2.0 * std::numbers::pi / n; }
  double phi(int j) const { return j * phi_step(n_phi_); }

  static void cubic_weights(double f, double w[4]) {
    const double a = f + 1, b = f, c = f - 1, d = f - 2;
    w[0] = -b * c * d / 6.0;
    w[1] = a * c * d / 2.0;
    w[2] = -a * b * d / 2.0;
    w[3] = a * b * c / 6.0;
  }

  double& at(int k, int i, int j) {
    return values_[(static_cast<std::size_t>(k) * n_xi_ + i) * n_phi_ + j];
  }
  double node(int k, int i, int j) const {
    if (i < 0) {
      // Through the centre: (-xi, phi) is (xi, phi + pi).
      i = -i;
      j += n_phi_ / 2;
    }
    if (i >= n_xi_) return 0.0;
    j = ((j % n_phi_) + n_phi_) % n_phi_;
    return values_[(static_cast<std::size_t>(k) * n_xi_ + i) * n_phi_ + j];
  }

  HyperbolicPoint z_;
  int n_xi_;
  int n_phi_;
  double step_;
  double extent_;
  std::vector<double> root_u_;
  std::vector<double> bary_;
  std::vector<double> values_;
};

inline void require_convolution_args(double t, const ConvolutionQuadSpec& quad) {
  if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("convolution: t must be > 0");
  quad.validate();
}

}  // namespace detail

/// h_n(t, z, z') from the recursion h_n = int int h1(t - s, z, w) h_{n-1}(s, w, z').
/// Orders above 3 are refused.
inline SeriesTerm hn_convolution(const DriftSpec& spec, int n, double t, const HyperbolicPoint& z,
                                 const HyperbolicPoint& z2, const ConvolutionQuadSpec& quad = {}) {
  if (n < 1) throw std::invalid_argument("hn_convolution: n must be >= 1");
  if (n > 3) throw UnsupportedOrder("hn_convolution: orders above 3 are not supported");
  detail::require_convolution_args(t, quad);
  SeriesTerm term;
  term.n = n;
  term.majorant = hn_majorant(n, t, spec.k0(), q2_density(t, z, z2, quad.kernel));
  if (spec.is_zero()) return term;
  if (n == 1) {
    term.value = h1(spec, t, z, z2, quad.kernel);
    return term;
  }
  KernelCache cache(quad.kernel, quad.kernel_step);
  const detail::ConvolutionNodes nodes(quad);
  auto h1_fn = [&](const HyperbolicPoint& from) {
    return [&spec, &cache, from](double tau, const HyperbolicPoint& w) {
      return detail::h1_from_table(spec, cache.get(tau), from, w);
    };
  };
  auto h1_to = [&](const HyperbolicPoint& to) {
    return [&spec, &cache, to](double s, const HyperbolicPoint& w) {
      return detail::h1_from_table(spec, cache.get(s), w, to);
    };
  };
  if (n == 2) {
    term.value = detail::convolve(t, z, z2, h1_fn(z), h1_to(z2), nodes);
    return term;
  }
  // n == 3: the inner h2(s, w, z') is itself a convolution.
  auto h2_to = [&](double s, const HyperbolicPoint& w) {
    return detail::convolve(s, w, z2, h1_fn(w), h1_to(z2), nodes);
  };
  term.value = detail::convolve(t, z, z2, h1_fn(z), h2_to, nodes);
  return term;
}

/// Truncated parametrix density with respect to dx' dy'.
struct ParametrixDensity {
  double value = 0.0;
  double remainder_bound = 0.0;
  double q2 = 0.0;                ///< zeroth term q2(t, z, z') / y'^2
  std::vector<double> terms;      ///< int int q2 h_n for n = 1..n_terms
};

/// Evaluates q2/y'^2 + sum_{n <= n_terms} int int q2(t - s, z, w)/y_w^2 h_n(s, w, z')
/// at each target.
///
/// The n-th correction is computed as g_n(t, z') with
///   g_0(u, .) = q2(u, z, .) / y^2,  g_n(u, .) = int_0^u int g_{n-1}(u - s, w) h1(s, w, .),
/// which is the same quantity regrouped. The intermediate g_1, g_2 are
/// tabulated once on polar grids about z and shared by all targets.
inline std::vector<ParametrixDensity> density_parametrix_many(
    const DriftSpec& spec, double t, const HyperbolicPoint& z,
    const std::vector<HyperbolicPoint>& targets, int n_terms, const ConvolutionQuadSpec& quad = {}) {
  if (n_terms < 0 || n_terms > 3) {
    throw UnsupportedOrder("density_parametrix: n_terms must lie in [0, 3]");
  }
  detail::require_convolution_args(t, quad);
  std::vector<ParametrixDensity> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    out[i].q2 = q2_density(t, z, targets[i], quad.kernel);
    out[i].value = out[i].q2;
    out[i].remainder_bound = parametrix_remainder_bound(t, spec.k0(), n_terms, out[i].q2);
    out[i].terms.assign(static_cast<std::size_t>(n_terms), 0.0);
  }
  if (n_terms == 0 || spec.is_zero()) return out;

  KernelCache cache(quad.kernel, quad.kernel_step);
  const detail::ConvolutionNodes nodes(quad);
  using Density = std::function<double(double, const HyperbolicPoint&)>;
  std::vector<std::unique_ptr<detail::PolarDensityTable>> tables;
  Density g_prev = [&cache, z](double u, const HyperbolicPoint& w) {
    return detail::q_from_table(cache.get(u), z, w);
  };
  auto correction = [&](const Density& g, double u, const HyperbolicPoint& target) {
    auto h1_to = [&spec, &cache, &target](double s, const HyperbolicPoint& w) {
      return detail::h1_from_table(spec, cache.get(s), w, target);
    };
    return detail::convolve(u, z, target, g, h1_to, nodes);
  };
  for (int n = 1; n <= n_terms; ++n) {
    std::vector<double> vals(targets.size());
    parallel_blocks(targets.size(), quad.workers, [&](std::size_t i) {
      vals[i] = correction(g_prev, t, targets[i]);
    });
    for (std::size_t i = 0; i < targets.size(); ++i) {
      out[i].terms[static_cast<std::size_t>(n - 1)] = vals[i];
      out[i].value += vals[i];
    }
    if (n < n_terms) {
      tables.push_back(std::make_unique<detail::PolarDensityTable>(
          z, t, quad, [&](double u, const HyperbolicPoint& w) { return correction(g_prev, u, w); }));
      const detail::PolarDensityTable* tab = tables.back().get();
      g_prev = [tab](double u, const HyperbolicPoint& w) { return (*tab)(u, w); };
    }
  }
  return out;
}

inline ParametrixDensity density_parametrix(const DriftSpec& spec, double t,
                                            const HyperbolicPoint& z, const HyperbolicPoint& z2,
                                            int n_terms, const ConvolutionQuadSpec& quad = {}) {
  return density_parametrix_many(spec, t, z, {z2}, n_terms, quad).front();
}

}  // namespace hbm
