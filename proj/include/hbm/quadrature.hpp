#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/math/constants/constants.hpp>

#include "hbm/errors.hpp"
#include "hbm/quad_math.hpp"

namespace hbm {

/// Neumaier's compensated summation.
template <class Real = double>
class CompensatedSum {
 public:
  void add(Real v) {
    using std::fabs;
    using qmath::fabs;
    const Real t = sum_ + v;
    if (fabs(sum_) >= fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }

  Real value() const { return sum_ + comp_; }

 private:
  Real sum_ = Real(0);
  Real comp_ = Real(0);
};

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
template <class Real = double>
struct GaussLegendreRule {
  std::vector<Real> nodes;
  std::vector<Real> weights;
};

template <class Real>
inline Real pi_value() {
  if constexpr (std::is_same_v<Real, qmath::quad>) {
    return qmath::kPi;
  } else if constexpr (std::is_floating_point_v<Real>) {
    return std::numbers::pi_v<Real>;
  } else {
    return boost::math::constants::pi<Real>();
  }
}

template <class Real>
inline Real epsilon_value() {
  if constexpr (std::is_same_v<Real, qmath::quad>) {
    return qmath::kEpsilon;
  } else {
    return std::numeric_limits<Real>::epsilon();
  }
}

/// Newton iteration on P_n; works in any floating type with cos/fabs.
template <class Real = double>
GaussLegendreRule<Real> gauss_legendre(int n) {
  using qmath::cos;
  using qmath::fabs;
  using std::cos;
  using std::fabs;
  if (n < 1) {
    throw std::invalid_argument("gauss_legendre: n must be >= 1");
  }
  GaussLegendreRule<Real> rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const Real tol = Real(4) * epsilon_value<Real>();
  // Returns {P_n(x), P_n'(x)}.
  auto legendre = [n](Real x) {
    Real p0 = 1;
    Real p1 = x;
    for (int k = 2; k <= n; ++k) {
      const Real p2 = (Real(2 * k - 1) * x * p1 - Real(k - 1) * p0) / Real(k);
      p0 = p1;
      p1 = p2;
    }
    return std::array<Real, 2>{p1, Real(n) * (x * p1 - p0) / (x * x - Real(1))};
  };
  for (int i = 0; i < (n + 1) / 2; ++i) {
    Real x = cos(pi_value<Real>() * (Real(i) + Real(0.75)) / (Real(n) + Real(0.5)));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = legendre(x);
      const Real dx = p / dp;
      x -= dx;
      if (fabs(dx) <= tol) {
        break;
      }
    }
    const Real dp = legendre(x)[1];
    const Real w = Real(2) / ((Real(1) - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) {
    rule.nodes[n / 2] = 0;
  }
  return rule;
}

namespace detail {

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <std::size_t M>
struct GkPanel {
  double a;
  double b;
  std::array<double, M> value;
  std::array<double, M> abs_value;
  std::array<double, M> error;
  double priority;
};

template <std::size_t M, class F>
GkPanel<M> gk15_panel(const F& f, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  GkPanel<M> p{a, b, {}, {}, {}, 0.0};
  std::array<double, M> kron{};
  std::array<double, M> gauss{};
  std::array<double, M> absk{};
  const std::array<double, M> fc = f(centre);
  for (std::size_t m = 0; m < M; ++m) {
    kron[m] = kWgk[7] * fc[m];
    gauss[m] = kWg[3] * fc[m];
    absk[m] = kWgk[7] * std::fabs(fc[m]);
  }
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const std::array<double, M> f1 = f(centre - dx);
    const std::array<double, M> f2 = f(centre + dx);
    for (std::size_t m = 0; m < M; ++m) {
      kron[m] += kWgk[j] * (f1[m] + f2[m]);
      absk[m] += kWgk[j] * (std::fabs(f1[m]) + std::fabs(f2[m]));
      if (j % 2 == 1) {
        gauss[m] += kWg[j / 2] * (f1[m] + f2[m]);
      }
    }
  }
  for (std::size_t m = 0; m < M; ++m) {
    p.value[m] = kron[m] * half;
    p.abs_value[m] = absk[m] * std::fabs(half);
    p.error[m] = std::fabs((kron[m] - gauss[m]) * half);
  }
  return p;
}

}  // namespace detail

/// Outcome of an adaptive quadrature.
template <std::size_t M>
struct QuadratureResult {
  std::array<double, M> value{};
  std::array<double, M> abs_value{};  ///< Integral of |f|, per component.
  std::array<double, M> error{};
  int panels = 0;
};

/// Globally adaptive Gauss-Kronrod 7/15 quadrature of a vector integrand.
///
/// `f` maps a double to std::array<double, M>. The initial partition is given
/// by `breakpoints` (sorted, at least two). Component m has converged when its
/// error estimate is below max(abs_tol, rel_tol * integral of |f_m|), so a
/// component that cancels to zero still terminates. Panels with the largest
/// scaled error are bisected first.
template <std::size_t M, class F>
QuadratureResult<M> integrate_adaptive(const F& f,
                                       std::span<const double> breakpoints,
                                       double rel_tol, double abs_tol,
                                       int max_panels) {
  using Panel = detail::GkPanel<M>;
  std::vector<Panel> panels;
  panels.reserve(static_cast<std::size_t>(max_panels) + 2);
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (breakpoints[i + 1] > breakpoints[i]) {
      panels.push_back(detail::gk15_panel<M>(f, breakpoints[i], breakpoints[i + 1]));
    }
  }
  auto totals = [&](QuadratureResult<M>& r) {
    r.value.fill(0.0);
    r.abs_value.fill(0.0);
    r.error.fill(0.0);
    std::array<CompensatedSum<double>, M> v{};
    for (const Panel& p : panels) {
      for (std::size_t m = 0; m < M; ++m) {
        v[m].add(p.value[m]);
        r.abs_value[m] += p.abs_value[m];
        r.error[m] += p.error[m];
      }
    }
    for (std::size_t m = 0; m < M; ++m) {
      r.value[m] = v[m].value();
    }
    r.panels = static_cast<int>(panels.size());
  };
  QuadratureResult<M> result;
  while (true) {
    totals(result);
    std::array<double, M> tol{};
    bool done = true;
    for (std::size_t m = 0; m < M; ++m) {
      tol[m] = std::max(abs_tol, rel_tol * result.abs_value[m]);
      // Below roundoff the estimate cannot shrink further.
      tol[m] = std::max(tol[m], 50.0 * std::numeric_limits<double>::epsilon() *
                                    result.abs_value[m]);
      if (result.error[m] > tol[m]) {
        done = false;
      }
    }
    if (done) {
      return result;
    }
    if (static_cast<int>(panels.size()) >= max_panels) {
      throw NonConvergence("adaptive quadrature exceeded " +
                           std::to_string(max_panels) + " subdivisions");
    }
    std::size_t worst = 0;
    double worst_score = -1.0;
    for (std::size_t i = 0; i < panels.size(); ++i) {
      double score = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        if (tol[m] > 0.0) {
          score = std::max(score, panels[i].error[m] / tol[m]);
        } else {
          score = std::max(score, panels[i].error[m]);
        }
      }
      if (score > worst_score) {
        worst_score = score;
        worst = i;
      }
    }
    const Panel old = panels[worst];
    const double mid = 0.5 * (old.a + old.b);
    if (!(mid > old.a && mid < old.b)) {
      throw NonConvergence("adaptive quadrature: panel below resolution");
    }
    panels[worst] = detail::gk15_panel<M>(f, old.a, mid);
    panels.push_back(detail::gk15_panel<M>(f, mid, old.b));
  }
}

/// Scalar convenience wrapper.
template <class F>
QuadratureResult<1> integrate_adaptive_scalar(const F& f,
                                              std::span<const double> breakpoints,
                                              double rel_tol, double abs_tol,
                                              int max_panels) {
  auto g = [&f](double x) { return std::array<double, 1>{f(x)}; };
  return integrate_adaptive<1>(g, breakpoints, rel_tol, abs_tol, max_panels);
}

/// Adaptive bisection with a fixed Gauss-Legendre rule in precision `Real`.
///
/// Each panel is accepted once the rule on the panel and on its two halves
/// agree to `abs_tol`. Used where the integrand is smooth but the arithmetic
/// must carry more digits than double.
template <class Real, class F>
Real integrate_gl_adaptive(const F& f, Real a, Real b,
                           const GaussLegendreRule<Real>& rule, Real abs_tol,
                           int max_depth) {
  using qmath::fabs;
  using std::fabs;
  auto apply = [&](Real lo, Real hi) {
    const Real c = (lo + hi) / Real(2);
    const Real h = (hi - lo) / Real(2);
    CompensatedSum<Real> s;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      s.add(rule.weights[i] * f(c + h * rule.nodes[i]));
    }
    return s.value() * h;
  };
  struct Item {
    Real lo;
    Real hi;
    Real whole;
    int depth;
  };
  CompensatedSum<Real> total;
  std::vector<Item> stack{{a, b, apply(a, b), 0}};
  while (!stack.empty()) {
    Item it = stack.back();
    stack.pop_back();
    const Real mid = (it.lo + it.hi) / Real(2);
    const Real left = apply(it.lo, mid);
    const Real right = apply(mid, it.hi);
    const Real scale = Real(1) / Real(std::int64_t{1} << std::min(it.depth, 60));
    const Real floor_tol = Real(64) * epsilon_value<Real>() * (fabs(left) + fabs(right));
    if (fabs(left + right - it.whole) <= abs_tol * scale ||
        fabs(left + right - it.whole) <= floor_tol) {
      total.add(left + right);
      continue;
    }
    if (it.depth >= max_depth) {
      throw NonConvergence("Gauss-Legendre bisection exceeded depth " +
                           std::to_string(max_depth));
    }
    stack.push_back({it.lo, mid, left, it.depth + 1});
    stack.push_back({mid, it.hi, right, it.depth + 1});
  }
  return total.value();
}

}  // namespace hbm
