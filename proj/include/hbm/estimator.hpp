#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hbm/drift.hpp"
#include "hbm/errors.hpp"
#include "hbm/kernels.hpp"
#include "hbm/parallel.hpp"
#include "hbm/payoff.hpp"
#include "hbm/rng.hpp"
#include "hbm/simulator.hpp"
#include "hbm/stats.hpp"
#include "hbm/theta.hpp"

namespace hbm {

/// Event times of a rate-`rate` Poisson process on (0, horizon].
struct PoissonClock {
  double rate = 1.0;
  double horizon = 0.0;
  std::vector<double> events;

  std::size_t size() const noexcept { return events.size(); }
};

inline PoissonClock sample_clock(double t, double rate, RngStream& rng) {
  if (!(t > 0.0) || !(rate > 0.0)) {
    throw std::invalid_argument("sample_clock: need t > 0 and rate > 0");
  }
  PoissonClock c{rate, t, {}};
  double s = rng.exponential(rate);
  while (s < t) {
    c.events.push_back(s);
    s += rng.exponential(rate);
  }
  return c;
}

/// Where the drift weights sit along the clock.
///
/// kTrailing: the first interval [0, T1] carries no weight and each later
/// interval [T_i, T_{i+1}] (with T_{N+1} = t) carries
/// theta(T_{i+1} - T_i, Z_{T_i}, Z_{T_{i+1}}). This is the expansion
/// u = P_t f + int P_s (mu d/dx) u(t - s) ds iterated, so the estimator is
/// unbiased.
///
/// kLeading: weights on [T_{i-1}, T_i] for i = 1..N, starting from the
/// origin. This puts the drift operator on the wrong side of each kernel
/// and is kept only for comparison.
enum class ThetaPlacement { kTrailing, kLeading };

struct WeightedSample {
  double weight = 1.0;
  HyperbolicPoint endpoint{0.0, 1.0};
  int n_events = 0;
  PoissonClock clock;
  int clamp_count = 0;
  int theta_exceed_count = 0;
  int retries = 0;
};

struct SamplerOptions {
  KernelConfig kernel{};
  ThetaPlacement placement = ThetaPlacement::kTrailing;
  int substeps_per_unit = kDefaultSubstepsPerUnit;
  /// Kernel NonConvergence is retried this many times, each with four times
  /// the subdivision budget.
  int max_retries = 2;
};

namespace detail {

inline ThetaValue theta_with_retry(const DriftSpec& spec, double dt, const HyperbolicPoint& a,
                                   const HyperbolicPoint& b, const SamplerOptions& opt,
                                   int& retries) {
  KernelConfig cfg = opt.kernel;
  for (int attempt = 0;; ++attempt) {
    try {
      return theta(spec, dt, a, b, cfg);
    } catch (const NonConvergence&) {
      if (attempt >= opt.max_retries) throw;
      ++retries;
      cfg.max_subdivisions *= 4;
    }
  }
}

}  // namespace detail

/// One weighted draw e^{rate t} rate^{-N} prod theta together with Z0_t.
/// The clock is drawn first from `rng`, then the path.
inline WeightedSample weighted_sample(const DriftSpec& spec, double t, const HyperbolicPoint& z0,
                                      double rate, RngStream& rng,
                                      const SamplerOptions& opt = {}) {
  WeightedSample s;
  s.clock = sample_clock(t, rate, rng);
  s.n_events = static_cast<int>(s.clock.size());
  std::vector<double> times = s.clock.events;
  if (times.empty() || times.back() < t) times.push_back(t);
  const PathGrid path = sample_hbm_grid(z0, times, opt.substeps_per_unit, rng);
  s.endpoint = path.points.back();

  double w = std::exp(rate * t - s.n_events * std::log(rate));
  // Knot i is the path position at the i-th grid time, knot -1 the origin.
  auto knot = [&](long i) -> const HyperbolicPoint& {
    return i < 0 ? z0 : path.points[static_cast<std::size_t>(i)];
  };
  auto knot_time = [&](long i) { return i < 0 ? 0.0 : times[static_cast<std::size_t>(i)]; };
  const long n = s.n_events;
  const long first = opt.placement == ThetaPlacement::kTrailing ? 0 : -1;
  for (long i = first; i < first + n && w != 0.0; ++i) {
    const double dt = knot_time(i + 1) - knot_time(i);
    const ThetaValue th = detail::theta_with_retry(spec, dt, knot(i), knot(i + 1), opt, s.retries);
    s.clamp_count += th.clamped;
    s.theta_exceed_count += th.exceeds_bound;
    w *= th.value;
  }
  s.weight = w;
  return s;
}

inline WeightedSample weighted_sample(const DriftSpec& spec, double t, const HyperbolicPoint& z0,
                                      double rate, RngStream& rng, const KernelConfig& cfg) {
  SamplerOptions opt;
  opt.kernel = cfg;
  return weighted_sample(spec, t, z0, rate, rng, opt);
}

/// e^{rate t} (3 K0 / (2 rate))^N, the weight ceiling implied by |theta| <= 3 K0 / 2.
inline double weight_ceiling(double t, double k0, double rate, int n_events) {
  return std::exp(rate * t + n_events * std::log(1.5 * k0 / rate));
}

struct EstimateDiagnostics {
  double max_abs_weight = 0.0;
  double mean_events = 0.0;
  std::uint64_t clamp_count = 0;
  std::uint64_t theta_exceed_count = 0;   ///< theta beyond 3 K0 / 2 (not clamped)
  std::uint64_t ceiling_violations = 0;   ///< |weight| above weight_ceiling
  std::uint64_t unbounded_f_count = 0;    ///< |f(endpoint)| above the configured cap
  std::uint64_t retries = 0;
  double weight_second_moment = 0.0;      ///< mean of weight^2
  double weight_second_moment_se = 0.0;
};

struct EstimateResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t n_paths = 0;
  std::uint64_t seed = 0;
  EstimateDiagnostics diagnostics;
};

struct EstimatorOptions {
  SamplerOptions sampler{};
  unsigned workers = 1;
  std::size_t block_size = 4096;
  /// |f| above this counts towards unbounded_f_count.
  double f_cap = 1e6;
};

namespace detail {

struct BlockTally {
  std::vector<RunningStats> values;
  RunningStats w2;
  double max_abs_weight = 0.0;
  std::uint64_t events = 0;
  std::uint64_t clamps = 0;
  std::uint64_t exceed = 0;
  std::uint64_t ceiling = 0;
  std::uint64_t unbounded = 0;
  std::uint64_t retries = 0;
};

/// Runs weighted samples for n_paths paths in fixed blocks; `score` maps a
/// sample to one value per output slot.
template <class Score>
std::vector<EstimateResult> run_weighted(const DriftSpec& spec, double t, const HyperbolicPoint& z0,
                                         std::uint64_t n_paths, double rate, std::uint64_t seed,
                                         const EstimatorOptions& opt, std::size_t slots,
                                         const Score& score) {
  if (n_paths < 2) throw std::invalid_argument("estimator: n_paths must be >= 2");
  if (!(t > 0.0) || !(rate > 0.0)) throw std::invalid_argument("estimator: need t > 0, rate > 0");
  if (opt.block_size == 0) throw std::invalid_argument("estimator: block_size must be > 0");
  const std::size_t n_blocks = (n_paths + opt.block_size - 1) / opt.block_size;
  std::vector<BlockTally> tallies(n_blocks);
  parallel_blocks(n_blocks, opt.workers, [&](std::size_t b) {
    BlockTally tally;
    tally.values.resize(slots);
    std::vector<double> row(slots);
    const std::uint64_t lo = b * opt.block_size;
    const std::uint64_t hi = std::min<std::uint64_t>(n_paths, lo + opt.block_size);
    for (std::uint64_t p = lo; p < hi; ++p) {
      RngStream rng(seed, make_stream_id(StreamPurpose::kPath, p));
      const WeightedSample s = weighted_sample(spec, t, z0, rate, rng, opt.sampler);
      std::fill(row.begin(), row.end(), 0.0);
      score(s, row, tally);
      for (std::size_t k = 0; k < slots; ++k) tally.values[k].add(row[k]);
      tally.w2.add(s.weight * s.weight);
      tally.max_abs_weight = std::max(tally.max_abs_weight, std::fabs(s.weight));
      tally.events += static_cast<std::uint64_t>(s.n_events);
      tally.clamps += static_cast<std::uint64_t>(s.clamp_count);
      tally.exceed += static_cast<std::uint64_t>(s.theta_exceed_count);
      tally.retries += static_cast<std::uint64_t>(s.retries);
      if (std::fabs(s.weight) > weight_ceiling(t, spec.k0(), rate, s.n_events)) ++tally.ceiling;
    }
    tallies[b] = std::move(tally);
  });

  EstimateDiagnostics diag;
  std::vector<RunningStats> w2_blocks;
  std::uint64_t events = 0;
  for (const auto& tl : tallies) {
    diag.max_abs_weight = std::max(diag.max_abs_weight, tl.max_abs_weight);
    events += tl.events;
    diag.clamp_count += tl.clamps;
    diag.theta_exceed_count += tl.exceed;
    diag.ceiling_violations += tl.ceiling;
    diag.unbounded_f_count += tl.unbounded;
    diag.retries += tl.retries;
    w2_blocks.push_back(tl.w2);
  }
  diag.mean_events = static_cast<double>(events) / static_cast<double>(n_paths);
  const RunningStats w2 = merge_pairwise(std::move(w2_blocks));
  diag.weight_second_moment = w2.mean;
  diag.weight_second_moment_se = w2.std_error();

  std::vector<EstimateResult> out(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    std::vector<RunningStats> blocks;
    blocks.reserve(n_blocks);
    for (const auto& tl : tallies) blocks.push_back(tl.values[k]);
    const RunningStats s = merge_pairwise(std::move(blocks));
    out[k] = {s.mean, s.std_error(), n_paths, seed, diag};
  }
  return out;
}

}  // namespace detail

/// Unbiased estimates of E f(Z^mu_t) for several payoffs from the same paths.
inline std::vector<EstimateResult> estimate_many(const DriftSpec& spec,
                                                 const std::vector<Payoff>& payoffs, double t,
                                                 const HyperbolicPoint& z0, std::uint64_t n_paths,
                                                 double rate, std::uint64_t seed,
                                                 const EstimatorOptions& opt = {}) {
  return detail::run_weighted(
      spec, t, z0, n_paths, rate, seed, opt, payoffs.size(),
      [&](const WeightedSample& s, std::vector<double>& row, detail::BlockTally& tally) {
        bool flagged = false;
        for (std::size_t k = 0; k < payoffs.size(); ++k) {
          const double f = payoffs[k](s.endpoint);
          flagged = flagged || std::fabs(f) > opt.f_cap;
          row[k] = s.weight == 0.0 ? 0.0 : s.weight * f;
        }
        tally.unbounded += flagged;
      });
}

/// Unbiased estimate of E f(Z^mu_t). f should be bounded; unbounded payoffs
/// are allowed and only counted in the diagnostics.
inline EstimateResult estimate_expectation(const DriftSpec& spec, const Payoff& f, double t,
                                           const HyperbolicPoint& z0, std::uint64_t n_paths,
                                           double rate, std::uint64_t seed,
                                           const EstimatorOptions& opt = {}) {
  return estimate_many(spec, {f}, t, z0, n_paths, rate, seed, opt).front();
}

/// f_sup^2 e^{2 rate t} E[(3 K0 / (2 rate))^{2N}] for N ~ Poisson(rate t).
inline double second_moment_bound(double t, double k0, double rate, double f_sup) {
  if (!(t > 0.0) || !(k0 >= 0.0) || !(rate > 0.0) || !(f_sup >= 0.0)) {
    throw std::invalid_argument("second_moment_bound: arguments must be positive");
  }
  const double q = 1.5 * k0 / rate;
  return f_sup * f_sup * std::exp(2.0 * rate * t + rate * t * (q * q - 1.0));
}

/// Rectilinear partition of a rectangle into nx by ny cells.
struct DensityGrid {
  double x_lo = -1.0;
  double x_hi = 1.0;
  double y_lo = 0.5;
  double y_hi = 1.5;
  int nx = 8;
  int ny = 8;

  void validate() const {
    Box{x_lo, x_hi, y_lo, y_hi}.validate();
    if (nx < 1 || ny < 1) throw std::invalid_argument("DensityGrid: need nx, ny >= 1");
  }
  double dx() const { return (x_hi - x_lo) / nx; }
  double dy() const { return (y_hi - y_lo) / ny; }
  double cell_area() const { return dx() * dy(); }
  Box cell(int i, int j) const {
    return {x_lo + i * dx(), x_lo + (i + 1) * dx(), y_lo + j * dy(), y_lo + (j + 1) * dy()};
  }
  /// Cell index i * ny + j containing z, or -1.
  long locate(const HyperbolicPoint& z) const {
    if (z.x() < x_lo || z.x() >= x_hi || z.y() < y_lo || z.y() >= y_hi) return -1;
    const int i = std::min(nx - 1, static_cast<int>((z.x() - x_lo) / dx()));
    const int j = std::min(ny - 1, static_cast<int>((z.y() - y_lo) / dy()));
    return static_cast<long>(i) * ny + j;
  }
};

/// Weighted histogram of Z^mu_t: per-cell mean of weight 1{cell} / area,
/// indexed i * ny + j.
inline std::vector<EstimateResult> estimate_density(const DriftSpec& spec, double t,
                                                    const HyperbolicPoint& z0,
                                                    const DensityGrid& grid, std::uint64_t n_paths,
                                                    double rate, std::uint64_t seed,
                                                    const EstimatorOptions& opt = {}) {
  grid.validate();
  const double inv_area = 1.0 / grid.cell_area();
  return detail::run_weighted(
      spec, t, z0, n_paths, rate, seed, opt, static_cast<std::size_t>(grid.nx) * grid.ny,
      [&](const WeightedSample& s, std::vector<double>& row, detail::BlockTally&) {
        const long cell = grid.locate(s.endpoint);
        if (cell >= 0) row[static_cast<std::size_t>(cell)] = s.weight * inv_area;
      });
}

/// Plain Monte Carlo of E f(Z^mu_t) with the hybrid Euler scheme.
inline std::vector<EstimateResult> euler_expectation_many(
    const DriftSpec& spec, const std::vector<Payoff>& payoffs, double t, const HyperbolicPoint& z0,
    int n_steps, std::uint64_t n_paths, std::uint64_t seed, unsigned workers = 1,
    std::size_t block_size = 4096) {
  if (n_paths < 2) throw std::invalid_argument("euler oracle: n_paths must be >= 2");
  const std::size_t n_blocks = (n_paths + block_size - 1) / block_size;
  std::vector<std::vector<RunningStats>> tallies(n_blocks);
  parallel_blocks(n_blocks, workers, [&](std::size_t b) {
    std::vector<RunningStats> acc(payoffs.size());
    const std::uint64_t lo = b * block_size;
    const std::uint64_t hi = std::min<std::uint64_t>(n_paths, lo + block_size);
    for (std::uint64_t p = lo; p < hi; ++p) {
      RngStream rng(seed, make_stream_id(StreamPurpose::kEuler, p));
      const HyperbolicPoint z = euler_drifted(spec, z0, t, n_steps, rng);
      for (std::size_t k = 0; k < payoffs.size(); ++k) acc[k].add(payoffs[k](z));
    }
    tallies[b] = std::move(acc);
  });
  std::vector<EstimateResult> out(payoffs.size());
  for (std::size_t k = 0; k < payoffs.size(); ++k) {
    std::vector<RunningStats> blocks;
    for (const auto& tl : tallies) blocks.push_back(tl[k]);
    const RunningStats s = merge_pairwise(std::move(blocks));
    out[k].mean = s.mean;
    out[k].std_error = s.std_error();
    out[k].n_paths = n_paths;
    out[k].seed = seed;
  }
  return out;
}

}  // namespace hbm
