#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "hbm/errors.hpp"
#include "hbm/geometry.hpp"

namespace hbm {

/// mu(x, y) = 0.
struct ZeroDrift {};

/// mu(x, y) = c y.
struct LinearYDrift {
  double c;
};

/// mu(x, y) = c y sin(x).
struct SineXDrift {
  double c;
};

/// mu(x, y) = c y tanh(x).
struct TanhXDrift {
  double c;
};

/// Bilinear interpolation on a rectilinear (x, y) grid.
///
/// values[i * ys.size() + j] is mu(xs[i], ys[j]).
struct TableDrift {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * ys.size() + j]; }
};

/// Drift mu of the x equation together with its domination constant K0,
/// |mu(x, y)| <= K0 y.
class DriftSpec {
 public:
  using Kind = std::variant<ZeroDrift, LinearYDrift, SineXDrift, TanhXDrift,
                            std::shared_ptr<const TableDrift>>;

  static DriftSpec zero(double k0 = 1.0) { return DriftSpec(ZeroDrift{}, k0); }
  static DriftSpec linear_y(double c, double k0) { return DriftSpec(LinearYDrift{c}, k0); }
  static DriftSpec sine_x(double c, double k0) { return DriftSpec(SineXDrift{c}, k0); }
  static DriftSpec tanh_x(double c, double k0) { return DriftSpec(TanhXDrift{c}, k0); }

  /// Table drifts are not checked against K0 here; see validate_drift.
  static DriftSpec table(TableDrift table, double k0) {
    if (table.xs.size() < 2 || table.ys.size() < 2) {
      throw std::invalid_argument("TableDrift: need at least a 2x2 grid");
    }
    if (table.values.size() != table.xs.size() * table.ys.size()) {
      throw std::invalid_argument("TableDrift: values do not match grid size");
    }
    if (!std::is_sorted(table.xs.begin(), table.xs.end()) ||
        std::adjacent_find(table.xs.begin(), table.xs.end()) != table.xs.end() ||
        !std::is_sorted(table.ys.begin(), table.ys.end()) ||
        std::adjacent_find(table.ys.begin(), table.ys.end()) != table.ys.end()) {
      throw std::invalid_argument("TableDrift: grid axes must be strictly increasing");
    }
    if (!(table.ys.front() > 0.0)) {
      throw std::invalid_argument("TableDrift: grid must lie in y > 0");
    }
    for (double v : table.values) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("TableDrift: non-finite value");
      }
    }
    return DriftSpec(std::make_shared<const TableDrift>(std::move(table)), k0);
  }

  const Kind& kind() const noexcept { return kind_; }
  double k0() const noexcept { return k0_; }
  bool is_zero() const noexcept { return std::holds_alternative<ZeroDrift>(kind_); }

  /// Name used in configs and reports.
  std::string name() const {
    struct Visitor {
      std::string operator()(const ZeroDrift&) const { return "zero"; }
      std::string operator()(const LinearYDrift&) const { return "linear_y"; }
      std::string operator()(const SineXDrift&) const { return "sine_x"; }
      std::string operator()(const TanhXDrift&) const { return "tanh_x"; }
      std::string operator()(const std::shared_ptr<const TableDrift>&) const {
        return "table";
      }
    };
    return std::visit(Visitor{}, kind_);
  }

  /// Coefficient c of the builtin kinds (0 for zero and table drifts).
  double coefficient() const {
    if (const auto* p = std::get_if<LinearYDrift>(&kind_)) return p->c;
    if (const auto* p = std::get_if<SineXDrift>(&kind_)) return p->c;
    if (const auto* p = std::get_if<TanhXDrift>(&kind_)) return p->c;
    return 0.0;
  }

  /// The same drift with coefficient scaled by `factor` (builtins only).
  DriftSpec scaled(double factor) const {
    if (const auto* p = std::get_if<LinearYDrift>(&kind_)) return linear_y(p->c * factor, k0_ * std::fabs(factor));
    if (const auto* p = std::get_if<SineXDrift>(&kind_)) return sine_x(p->c * factor, k0_ * std::fabs(factor));
    if (const auto* p = std::get_if<TanhXDrift>(&kind_)) return tanh_x(p->c * factor, k0_ * std::fabs(factor));
    if (is_zero()) return *this;
    throw std::invalid_argument("DriftSpec::scaled: table drifts are not scalable");
  }

 private:
  DriftSpec(Kind kind, double k0) : kind_(std::move(kind)), k0_(k0) {
    if (!(k0 > 0.0) || !std::isfinite(k0)) {
      throw std::invalid_argument("DriftSpec: K0 must be finite and > 0");
    }
    const double c = coefficient();
    if (!std::isfinite(c) || std::fabs(c) > k0) {
      throw std::invalid_argument("DriftSpec: |c| must not exceed K0");
    }
  }

  Kind kind_;
  double k0_;
};

/// mu(x, y). Table drifts throw OutOfTable outside the grid hull.
inline double eval_mu(const DriftSpec& spec, const HyperbolicPoint& z) {
  struct Visitor {
    double x;
    double y;
    double operator()(const ZeroDrift&) const { return 0.0; }
    double operator()(const LinearYDrift& d) const { return d.c * y; }
    double operator()(const SineXDrift& d) const { return d.c * y * std::sin(x); }
    double operator()(const TanhXDrift& d) const { return d.c * y * std::tanh(x); }
    double operator()(const std::shared_ptr<const TableDrift>& tp) const {
      const TableDrift& t = *tp;
      if (x < t.xs.front() || x > t.xs.back() || y < t.ys.front() || y > t.ys.back()) {
        throw OutOfTable("eval_mu: (" + std::to_string(x) + ", " + std::to_string(y) +
                         ") outside table hull");
      }
      auto cell = [](const std::vector<double>& axis, double v) {
        auto it = std::upper_bound(axis.begin(), axis.end(), v);
        std::size_t i = static_cast<std::size_t>(it - axis.begin());
        i = std::clamp<std::size_t>(i, 1, axis.size() - 1);
        return i - 1;
      };
      const std::size_t i = cell(t.xs, x);
      const std::size_t j = cell(t.ys, y);
      const double fx = (x - t.xs[i]) / (t.xs[i + 1] - t.xs[i]);
      const double fy = (y - t.ys[j]) / (t.ys[j + 1] - t.ys[j]);
      return (1 - fx) * (1 - fy) * t.at(i, j) + fx * (1 - fy) * t.at(i + 1, j) +
             (1 - fx) * fy * t.at(i, j + 1) + fx * fy * t.at(i + 1, j + 1);
    }
  };
  return std::visit(Visitor{z.x(), z.y()}, spec.kind());
}

/// Loads a table drift from CSV with header x,y,mu (any row order). The
/// points must cover a full rectilinear grid exactly once.
inline TableDrift load_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("table csv: empty input");
  }
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(trim(cell));
  }
  if (header != std::vector<std::string>{"x", "y", "mu"}) {
    throw std::invalid_argument("table csv: header must be x,y,mu");
  }
  std::map<std::pair<double, double>, double> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw std::invalid_argument("table csv line " + std::to_string(line_no) +
                                  ": expected 3 columns");
    }
    try {
      const double x = std::stod(trim(a));
      const double y = std::stod(trim(b));
      const double mu = std::stod(trim(c));
      if (!points.emplace(std::make_pair(x, y), mu).second) {
        throw std::invalid_argument("duplicate grid point");
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("table csv line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  TableDrift t;
  for (const auto& [xy, mu] : points) {
    t.xs.push_back(xy.first);
    t.ys.push_back(xy.second);
  }
  std::sort(t.xs.begin(), t.xs.end());
  t.xs.erase(std::unique(t.xs.begin(), t.xs.end()), t.xs.end());
  std::sort(t.ys.begin(), t.ys.end());
  t.ys.erase(std::unique(t.ys.begin(), t.ys.end()), t.ys.end());
  if (t.xs.size() * t.ys.size() != points.size()) {
    throw std::invalid_argument("table csv: points do not form a rectilinear grid");
  }
  t.values.reserve(points.size());
  for (double x : t.xs) {
    for (double y : t.ys) {
      t.values.push_back(points.at({x, y}));
    }
  }
  return t;
}

inline TableDrift load_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("table csv: cannot open " + path);
  }
  return load_table_csv(in);
}

/// Axis-aligned rectangle [x_lo, x_hi] x [y_lo, y_hi] with y_lo > 0.
struct Box {
  double x_lo;
  double x_hi;
  double y_lo;
  double y_hi;

  void validate() const {
    if (!(x_lo < x_hi) || !(y_lo < y_hi) || !(y_lo > 0.0)) {
      throw std::invalid_argument("Box: need x_lo < x_hi, 0 < y_lo < y_hi");
    }
  }
  double area() const { return (x_hi - x_lo) * (y_hi - y_lo); }
};

/// Result of the sample-based check of the growth and regularity conditions.
struct ValidationReport {
  std::size_t samples = 0;
  double max_ratio = 0.0;  ///< max |mu| / y over the probes
  double k0 = 0.0;
  std::optional<HyperbolicPoint> worst_point;
  double lipschitz_estimate = 0.0;
  double max_abs_over_x = 0.0;  ///< boundedness probe: max_x |mu| / y on an x sweep
  bool growth_ok = false;
  bool lipschitz_ok = false;
  bool bounded_ok = false;

  bool passed() const { return growth_ok && lipschitz_ok && bounded_ok; }
};

namespace detail {

/// Radical inverse of `i` in base `b` (Halton coordinate).
inline double radical_inverse(std::uint64_t i, std::uint64_t b) {
  double f = 1.0;
  double r = 0.0;
  while (i > 0) {
    f /= static_cast<double>(b);
    r += f * static_cast<double>(i % b);
    i /= b;
  }
  return r;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Sweeps `box` with a randomly shifted 2-D Halton sequence (plus the table
/// nodes for table drifts) and reports the condition checks. Failures are
/// reported, never thrown.
inline ValidationReport validate_drift(const DriftSpec& spec, const Box& box,
                                       std::size_t samples = 100000,
                                       std::uint64_t rng_seed = 1,
                                       double lipschitz_cap = 1e6) {
  box.validate();
  ValidationReport rep;
  rep.k0 = spec.k0();
  std::uint64_t state = rng_seed;
  const double shift_x = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-53;
  const double shift_y = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-53;

  std::vector<HyperbolicPoint> probes;
  probes.reserve(samples + 64);
  for (std::size_t i = 0; i < samples; ++i) {
    const double u = std::fmod(detail::radical_inverse(i + 1, 2) + shift_x, 1.0);
    const double v = std::fmod(detail::radical_inverse(i + 1, 3) + shift_y, 1.0);
    probes.emplace_back(box.x_lo + u * (box.x_hi - box.x_lo),
                        box.y_lo + v * (box.y_hi - box.y_lo));
  }
  if (const auto* tp = std::get_if<std::shared_ptr<const TableDrift>>(&spec.kind())) {
    for (double x : (*tp)->xs) {
      for (double y : (*tp)->ys) {
        if (x >= box.x_lo && x <= box.x_hi && y >= box.y_lo && y <= box.y_hi) {
          probes.emplace_back(x, y);
        }
      }
    }
  }

  auto safe_mu = [&](const HyperbolicPoint& z) -> std::optional<double> {
    try {
      return eval_mu(spec, z);
    } catch (const OutOfTable&) {
      return std::nullopt;
    }
  };

  rep.growth_ok = true;
  const double hx = 1e-4 * (box.x_hi - box.x_lo);
  const double hy = 1e-4 * (box.y_hi - box.y_lo);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const HyperbolicPoint& z = probes[i];
    const auto mu = safe_mu(z);
    if (!mu) {
      continue;
    }
    ++rep.samples;
    const double ratio = std::fabs(*mu) / z.y();
    if (!rep.worst_point || ratio > rep.max_ratio) {
      rep.max_ratio = ratio;
      rep.worst_point = z;
    }
    if (std::fabs(*mu) > spec.k0() * z.y()) {
      rep.growth_ok = false;
    }
    // Local difference quotient along a short diagonal step.
    const double dir = (i % 2 == 0) ? 1.0 : -1.0;
    const double x2 = std::clamp(z.x() + dir * hx, box.x_lo, box.x_hi);
    const double y2 = std::clamp(z.y() + hy, box.y_lo, box.y_hi);
    if (x2 != z.x() || y2 != z.y()) {
      if (const auto mu2 = safe_mu(HyperbolicPoint(x2, y2))) {
        const double dist = std::hypot(x2 - z.x(), y2 - z.y());
        rep.lipschitz_estimate =
            std::max(rep.lipschitz_estimate, std::fabs(*mu2 - *mu) / dist);
      }
    }
  }
  rep.lipschitz_ok = std::isfinite(rep.lipschitz_estimate) &&
                     rep.lipschitz_estimate <= lipschitz_cap;

  // Boundedness in x: for a few heights, sweep x over a range much wider
  // than the box (clipped to the table hull for tables).
  double sweep_lo = box.x_lo - 100.0 * (box.x_hi - box.x_lo);
  double sweep_hi = box.x_hi + 100.0 * (box.x_hi - box.x_lo);
  if (const auto* tp = std::get_if<std::shared_ptr<const TableDrift>>(&spec.kind())) {
    sweep_lo = (*tp)->xs.front();
    sweep_hi = (*tp)->xs.back();
  }
  rep.bounded_ok = true;
  for (int j = 0; j < 5; ++j) {
    const double y = box.y_lo + (box.y_hi - box.y_lo) * (j + 0.5) / 5.0;
    for (int i = 0; i <= 2000; ++i) {
      const double x = sweep_lo + (sweep_hi - sweep_lo) * i / 2000.0;
      if (const auto mu = safe_mu(HyperbolicPoint(x, y))) {
        if (!std::isfinite(*mu)) {
          rep.bounded_ok = false;
        }
        rep.max_abs_over_x = std::max(rep.max_abs_over_x, std::fabs(*mu) / y);
      }
    }
  }
  if (rep.samples == 0) {
    rep.growth_ok = false;
  }
  return rep;
}

}  // namespace hbm
