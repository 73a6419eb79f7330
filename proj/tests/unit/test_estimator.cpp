#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hbm/estimator.hpp"
#include "hbm/payoff.hpp"

namespace {

using hbm::DriftSpec;
using hbm::HyperbolicPoint;
using hbm::Payoff;

hbm::EstimatorOptions opts(unsigned workers = 1) {
  hbm::EstimatorOptions o;
  o.workers = workers;
  o.block_size = 1024;
  return o;
}

}  // namespace

TEST(Payoff, RegistryParsing) {
  EXPECT_EQ(Payoff::parse("x")({2.0, 1.0}), 2.0);
  EXPECT_DOUBLE_EQ(Payoff::parse("cos_exp")({0.5, 2.0}), std::cos(0.5) * std::exp(-2.0));
  const auto box = Payoff::parse("box:-1,1,0.5,2");
  EXPECT_EQ(box({0.0, 1.0}), 1.0);
  EXPECT_EQ(box({1.5, 1.0}), 0.0);
  EXPECT_EQ(box.sup(), 1.0);
  const auto poly = Payoff::parse("poly:1 - 0.5*x^2*y + y;cap=3");
  EXPECT_DOUBLE_EQ(poly({2.0, 1.0}), 1.0 - 2.0 + 1.0);
  EXPECT_EQ(poly({0.0, 10.0}), 3.0);
  EXPECT_EQ(poly.sup(), 3.0);
  EXPECT_EQ(Payoff::parse("one")({5.0, 5.0}), 1.0);
  EXPECT_EQ(Payoff::parse("one").sup(), 1.0);
  EXPECT_FALSE(Payoff::parse("x").bounded());
}

TEST(Payoff, RejectsUnknownText) {
  EXPECT_THROW(Payoff::parse("sin"), std::invalid_argument);
  EXPECT_THROW(Payoff::parse("box:1,2,3"), std::invalid_argument);
  EXPECT_THROW(Payoff::parse("poly:1;limit=2"), std::invalid_argument);
  EXPECT_THROW(Payoff::parse("box:1,0,1,2"), std::invalid_argument);
}

TEST(Clock, EventsAreIncreasingInsideTheHorizon) {
  hbm::RngStream r(1, 2);
  for (int i = 0; i < 200; ++i) {
    const auto c = hbm::sample_clock(1.5, 2.0, r);
    double prev = 0.0;
    for (double s : c.events) {
      EXPECT_GT(s, prev);
      EXPECT_LT(s, 1.5);
      prev = s;
    }
  }
  EXPECT_THROW(hbm::sample_clock(1.0, 0.0, r), std::invalid_argument);
}

TEST(Clock, CountHasPoissonMoments) {
  hbm::RunningStats n, zero;
  for (std::uint64_t i = 0; i < 40000; ++i) {
    hbm::RngStream r(3, hbm::make_stream_id(hbm::StreamPurpose::kClock, i));
    const auto c = hbm::sample_clock(0.5, 2.0, r);
    n.add(static_cast<double>(c.size()));
    zero.add(c.size() == 0);
  }
  EXPECT_LT(std::fabs(n.mean - 1.0) / n.std_error(), 4.0);
  EXPECT_NEAR(n.variance(), 1.0, 0.05);
  EXPECT_LT(std::fabs(zero.mean - std::exp(-1.0)) / zero.std_error(), 4.0);
}

TEST(Estimator, DriftlessWeightIsClockIndicator) {
  hbm::RngStream r(4, 0);
  for (int i = 0; i < 200; ++i) {
    const auto s = hbm::weighted_sample(DriftSpec::zero(), 1.0, {0.0, 1.0}, 1.0, r);
    EXPECT_EQ(s.weight, s.n_events == 0 ? std::exp(1.0) : 0.0);
  }
}

TEST(Estimator, SingleEventWeightIsTheta) {
  // With one event at T1 the trailing weight is e^{rate t} / rate times
  // theta(t - T1, Z_T1, Z_t).
  const auto spec = DriftSpec::linear_y(0.5, 1.0);
  for (std::uint64_t p = 0; p < 400; ++p) {
    hbm::RngStream r(5, p);
    const auto s = hbm::weighted_sample(spec, 0.8, {0.0, 1.0}, 1.25, r);
    if (s.n_events != 1) continue;
    hbm::RngStream again(5, p);
    (void)hbm::sample_clock(0.8, 1.25, again);
    const auto path = hbm::sample_hbm_grid({0.0, 1.0}, {s.clock.events[0], 0.8}, 512, again);
    const double th = hbm::theta(spec, 0.8 - s.clock.events[0], path.points[0], path.points[1]).value;
    EXPECT_DOUBLE_EQ(s.weight, std::exp(1.25 * 0.8) / 1.25 * th);
    return;
  }
  FAIL() << "no single-event clock drawn";
}

TEST(Estimator, DriftlessMassIsOne) {
  const auto r = hbm::estimate_expectation(DriftSpec::zero(), Payoff::one(), 1.0, {0.0, 1.0}, 20000,
                                           1.0, 42, opts());
  EXPECT_LT(std::fabs(r.mean - 1.0) / r.std_error, 4.0);
  EXPECT_EQ(r.n_paths, 20000u);
}

TEST(Estimator, LinearDriftMeanIdentity) {
  // E X_t = x0 + c y0 t for mu = c y.
  const auto r = hbm::estimate_expectation(DriftSpec::linear_y(0.5, 1.0), Payoff::x(), 0.5,
                                           {0.0, 1.0}, 20000, 1.0, 43, opts());
  EXPECT_LT(std::fabs(r.mean - 0.25) / r.std_error, 3.0);
}

TEST(Estimator, AgreesWithEulerForSineDrift) {
  const auto spec = DriftSpec::sine_x(1.0, 1.0);
  const std::vector<Payoff> fs = {Payoff::cos_exp(), Payoff::parse("box:-0.5,0.5,0.5,1.5")};
  const HyperbolicPoint z0(0.3, 1.0);
  const auto est = hbm::estimate_many(spec, fs, 0.5, z0, 30000, 1.0, 44, opts());
  const auto eul = hbm::euler_expectation_many(spec, fs, 0.5, z0, 256, 30000, 44);
  for (std::size_t k = 0; k < fs.size(); ++k) {
    EXPECT_LT(std::fabs(hbm::z_score(est[k].mean, est[k].std_error, eul[k].mean, eul[k].std_error)), 3.0);
  }
}

// Weights on [T_{i-1}, T_i] starting from the origin are biased.
TEST(Estimator, LeadingPlacementIsBiased) {
  const auto spec = DriftSpec::sine_x(1.0, 1.0);
  const HyperbolicPoint z0(0.0, 1.0);
  auto o = opts();
  const auto eul = hbm::euler_expectation_many(spec, {Payoff::cos_exp()}, 1.0, z0, 256, 30000, 45).front();
  const auto trailing = hbm::estimate_expectation(spec, Payoff::cos_exp(), 1.0, z0, 30000, 1.0, 45, o);
  o.sampler.placement = hbm::ThetaPlacement::kLeading;
  const auto leading = hbm::estimate_expectation(spec, Payoff::cos_exp(), 1.0, z0, 30000, 1.0, 45, o);
  EXPECT_LT(std::fabs(hbm::z_score(trailing.mean, trailing.std_error, eul.mean, eul.std_error)), 3.0);
  EXPECT_GT(std::fabs(hbm::z_score(leading.mean, leading.std_error, eul.mean, eul.std_error)), 8.0);
}

TEST(Estimator, ResultsDoNotDependOnWorkerCount) {
  const auto spec = DriftSpec::tanh_x(0.8, 1.0);
  const std::vector<Payoff> fs = {Payoff::x(), Payoff::cos_exp()};
  const auto a = hbm::estimate_many(spec, fs, 0.5, {0.0, 1.0}, 5000, 1.0, 46, opts(1));
  const auto b = hbm::estimate_many(spec, fs, 0.5, {0.0, 1.0}, 5000, 1.0, 46, opts(3));
  const auto c = hbm::estimate_many(spec, fs, 0.5, {0.0, 1.0}, 5000, 1.0, 47, opts(1));
  for (std::size_t k = 0; k < fs.size(); ++k) {
    EXPECT_EQ(a[k].mean, b[k].mean);
    EXPECT_EQ(a[k].std_error, b[k].std_error);
    EXPECT_NE(a[k].mean, c[k].mean);
  }
  EXPECT_EQ(a[0].diagnostics.max_abs_weight, b[0].diagnostics.max_abs_weight);
}

// The ceiling assumes |theta| <= 3 K0 / 2, which fails on short intervals.
TEST(Estimator, WeightCeilingIsExceeded) {
  const auto r = hbm::estimate_expectation(DriftSpec::linear_y(1.0, 1.0), Payoff::one(), 1.0,
                                           {0.0, 1.0}, 20000, 1.0, 48, opts());
  EXPECT_GT(r.diagnostics.ceiling_violations, 0u);
  EXPECT_GT(r.diagnostics.theta_exceed_count, 0u);
  EXPECT_GT(r.diagnostics.max_abs_weight, hbm::weight_ceiling(1.0, 1.0, 1.0, 3));
}

TEST(Estimator, CeilingAndMomentFormulas) {
  EXPECT_DOUBLE_EQ(hbm::weight_ceiling(1.0, 1.0, 1.0, 0), std::exp(1.0));
  EXPECT_DOUBLE_EQ(hbm::weight_ceiling(0.5, 1.0, 2.0, 2), std::exp(1.0) * 0.75 * 0.75);
  // Rate 1: exp(t (1 + 9 K0^2 / 4)) f_sup^2.
  EXPECT_NEAR(hbm::second_moment_bound(1.0, 1.0, 1.0, 1.0), std::exp(3.25), 1e-12);
  EXPECT_NEAR(hbm::second_moment_bound(0.5, 2.0, 1.0, 2.0), 4.0 * std::exp(0.5 * 10.0), 1e-9);
}

TEST(Estimator, FlagsLargePayoffValues) {
  auto o = opts();
  o.f_cap = 0.5;
  const auto r = hbm::estimate_expectation(DriftSpec::zero(), Payoff::x(), 1.0, {0.0, 1.0}, 2000,
                                           1.0, 49, o);
  EXPECT_GT(r.diagnostics.unbounded_f_count, 0u);
}

TEST(Density, GridLocate) {
  const hbm::DensityGrid g{-1.0, 1.0, 0.5, 1.5, 4, 2};
  EXPECT_EQ(g.locate({-1.0, 0.5}), 0);
  EXPECT_EQ(g.locate({0.9, 1.4}), 3 * 2 + 1);
  EXPECT_EQ(g.locate({1.0, 1.0}), -1);
  EXPECT_EQ(g.locate({0.0, 0.4}), -1);
  EXPECT_DOUBLE_EQ(g.cell_area(), 0.25);
}

TEST(Density, DriftlessHistogramMatchesKernel) {
  const hbm::DensityGrid g{-0.5, 0.5, 0.6, 1.4, 2, 2};
  const HyperbolicPoint z0(0.0, 1.0);
  const auto cells = hbm::estimate_density(DriftSpec::zero(), 0.5, z0, g, 40000, 1.0, 50, opts());
  const auto gl = hbm::gauss_legendre<double>(6);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const auto b = g.cell(i, j);
      double avg = 0.0;
      for (int a = 0; a < 6; ++a) {
        for (int c = 0; c < 6; ++c) {
          const HyperbolicPoint w(b.x_lo + 0.5 * (b.x_hi - b.x_lo) * (gl.nodes[a] + 1.0),
                                  b.y_lo + 0.5 * (b.y_hi - b.y_lo) * (gl.nodes[c] + 1.0));
          avg += 0.25 * gl.weights[a] * gl.weights[c] * hbm::q2_density(0.5, z0, w);
        }
      }
      const auto& e = cells[static_cast<std::size_t>(i * 2 + j)];
      EXPECT_LT(std::fabs(e.mean - avg) / e.std_error, 4.0) << i << "," << j;
    }
  }
}
