#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include "hbm/kernels.hpp"
#include "hbm/parallel.hpp"
#include "hbm/quadrature.hpp"
#include "hbm/rng.hpp"
#include "hbm/simulator.hpp"
#include "hbm/stats.hpp"

namespace {

using hbm::HyperbolicPoint;
using hbm::RngStream;

// CDF of d(z0, Z_t) for driftless motion: int_0^rho p2(t, r) 2 pi sinh r dr,
// tabulated once on a fine grid and interpolated linearly.
struct DistanceCdf {
  double step;
  std::vector<double> values;

  DistanceCdf(double t, double rho_max, int n) : step(rho_max / n), values(n + 1, 0.0) {
    const auto gl = hbm::gauss_legendre<double>(10);
    for (int i = 0; i < n; ++i) {
      const double a = i * step;
      double acc = 0.0;
      for (int k = 0; k < 10; ++k) {
        const double r = a + 0.5 * step * (gl.nodes[k] + 1.0);
        acc += gl.weights[k] * hbm::mckean_p2(t, r).value * 2.0 * std::numbers::pi * std::sinh(r);
      }
      values[i + 1] = values[i] + 0.5 * step * acc;
    }
  }
  double operator()(double rho) const {
    const double u = rho / step;
    const auto i = static_cast<std::size_t>(u);
    if (i + 1 >= values.size()) return values.back();
    return values[i] + (u - i) * (values[i + 1] - values[i]);
  }
};

}  // namespace

// Known-answer vectors of Philox4x32-10.
TEST(Rng, PhiloxKnownAnswers) {
  using P = hbm::Philox4x32;
  EXPECT_EQ(P::block({0, 0, 0, 0}, {0, 0}),
            (P::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(P::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (P::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(P::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (P::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  RngStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  std::set<std::uint32_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto va = a();
    EXPECT_EQ(va, b());
    seen.insert(va);
    seen.insert(c());
    seen.insert(d());
  }
  EXPECT_GT(seen.size(), 295u);
}

TEST(Rng, StreamIdsSeparatePurposes) {
  const auto clock = hbm::make_stream_id(hbm::StreamPurpose::kClock, 5);
  const auto path = hbm::make_stream_id(hbm::StreamPurpose::kPath, 5);
  EXPECT_NE(clock, path);
  EXPECT_EQ(clock >> 56, 1u);
  EXPECT_EQ(path & ((1ull << 56) - 1), 5u);
}

TEST(Rng, UniformIsOpenInterval) {
  RngStream r(1, 1);
  double lo = 1.0, hi = 0.0;
  std::vector<double> xs;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    xs.push_back(u);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_GT(hbm::ks_one_sample(xs, [](double u) { return u; }).p_value, 1e-3);
}

TEST(Rng, NormalAndExponentialPassKs) {
  RngStream r(2, 9);
  std::vector<double> g, e;
  for (int i = 0; i < 20000; ++i) {
    g.push_back(r.normal());
    e.push_back(r.exponential(2.0));
  }
  EXPECT_GT(hbm::ks_one_sample(g, hbm::normal_cdf).p_value, 1e-3);
  EXPECT_GT(hbm::ks_one_sample(e, [](double x) { return 1.0 - std::exp(-2.0 * x); }).p_value, 1e-3);
}

TEST(Stats, MergeMatchesSequentialAccumulation) {
  RngStream r(3, 0);
  hbm::RunningStats all;
  std::vector<hbm::RunningStats> blocks(7);
  for (int i = 0; i < 7000; ++i) {
    const double v = r.normal() * 3.0 + 1.0;
    all.add(v);
    blocks[static_cast<std::size_t>(i / 1000)].add(v);
  }
  const auto merged = hbm::merge_pairwise(blocks);
  EXPECT_EQ(merged.n, all.n);
  EXPECT_NEAR(merged.mean, all.mean, 1e-13);
  EXPECT_NEAR(merged.variance(), all.variance(), 1e-11);
  EXPECT_NEAR(all.variance(), 9.0, 0.5);
}

TEST(Stats, NormalCdfAgreesWithBoost) {
  boost::math::normal_distribution<double> nd;
  for (double x : {-5.0, -1.3, 0.0, 0.4, 2.2}) {
    EXPECT_NEAR(hbm::normal_cdf(x), boost::math::cdf(nd, x), 1e-15);
  }
}

TEST(Stats, KsDetectsShift) {
  RngStream r(4, 0);
  std::vector<double> a, b;
  for (int i = 0; i < 5000; ++i) {
    a.push_back(r.normal());
    b.push_back(r.normal() + 0.2);
  }
  EXPECT_LT(hbm::ks_two_sample(a, b).p_value, 1e-6);
  EXPECT_LT(hbm::ks_one_sample(b, hbm::normal_cdf).p_value, 1e-6);
}

TEST(Stats, ZScore) {
  EXPECT_DOUBLE_EQ(hbm::z_score(1.0, 0.3, 0.5, 0.4), 1.0);
  EXPECT_EQ(hbm::z_score(1.0, 0.0, 1.0, 0.0), 0.0);
  EXPECT_TRUE(std::isinf(hbm::z_score(1.0, 0.0, 2.0, 0.0)));
}

TEST(Parallel, BlocksRunOnceAndErrorsPropagate) {
  std::vector<int> hits(100, 0);
  hbm::parallel_blocks(100, 4, [&](std::size_t b) { ++hits[b]; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(hbm::parallel_blocks(10, 3,
                                    [](std::size_t b) {
                                      if (b == 6) throw std::runtime_error("boom");
                                    }),
               std::runtime_error);
}

TEST(Simulator, ExactVolatilityIsLogNormal) {
  RngStream r(5, 0);
  std::vector<double> logs;
  for (int i = 0; i < 20000; ++i) logs.push_back(std::log(hbm::sample_y_exact(2.0, 0.5, r) / 2.0));
  const auto cdf = [](double v) { return hbm::normal_cdf((v + 0.25) / std::sqrt(0.5)); };
  EXPECT_GT(hbm::ks_one_sample(logs, cdf).p_value, 1e-3);
  EXPECT_THROW(hbm::sample_y_exact(0.0, 0.5, r), std::invalid_argument);
}

TEST(Simulator, GridMomentsMatchMartingaleIdentities) {
  const HyperbolicPoint z0(0.5, 1.5);
  const double t = 0.8;
  hbm::RunningStats x, y, x2;
  for (std::uint64_t p = 0; p < 20000; ++p) {
    RngStream r(11, p);
    const auto g = hbm::sample_hbm_grid(z0, {0.3, t}, 512, r);
    const auto& z = g.points.back();
    x.add(z.x());
    y.add(z.y());
    x2.add((z.x() - z0.x()) * (z.x() - z0.x()));
  }
  // E X = x0, E Y = y0, E (X - x0)^2 = y0^2 (e^t - 1).
  EXPECT_LT(std::fabs(x.mean - z0.x()) / x.std_error(), 4.0);
  EXPECT_LT(std::fabs(y.mean - z0.y()) / y.std_error(), 4.0);
  EXPECT_LT(std::fabs(x2.mean - 2.25 * std::expm1(t)) / x2.std_error(), 4.0);
}

TEST(Simulator, DistanceLawMatchesHeatKernel) {
  const HyperbolicPoint z0(0.0, 1.0);
  const double t = 0.7;
  const DistanceCdf cdf(t, 12.0, 3000);
  std::vector<double> rho;
  for (std::uint64_t p = 0; p < 8000; ++p) {
    RngStream r(12, p);
    rho.push_back(hbm::hyperbolic_distance(z0, hbm::sample_hbm_grid(z0, {t}, 512, r).points[0]));
  }
  EXPECT_NEAR(cdf(12.0), 1.0, 1e-8);
  EXPECT_GT(hbm::ks_one_sample(rho, cdf).p_value, 1e-3);
}

TEST(Simulator, GridRejectsBadInput) {
  RngStream r(1, 1);
  EXPECT_THROW(hbm::sample_hbm_grid({0.0, 1.0}, {}, 512, r), std::invalid_argument);
  EXPECT_THROW(hbm::sample_hbm_grid({0.0, 1.0}, {0.5, 0.4}, 512, r), std::invalid_argument);
  EXPECT_THROW(hbm::sample_hbm_grid({0.0, 1.0}, {0.5}, 50, r), std::invalid_argument);
}

TEST(Simulator, DriftlessEulerAgreesWithExactScheme) {
  const HyperbolicPoint z0(0.0, 1.0);
  std::vector<double> ex, eu;
  for (std::uint64_t p = 0; p < 6000; ++p) {
    RngStream a(13, p), b(14, p);
    ex.push_back(hbm::sample_hbm_grid(z0, {0.5}, 512, a).points[0].x());
    eu.push_back(hbm::euler_drifted(hbm::DriftSpec::zero(), z0, 0.5, 256, b).x());
  }
  EXPECT_GT(hbm::ks_two_sample(ex, eu).p_value, 1e-3);
}

TEST(Simulator, EulerMeanFollowsLinearDrift) {
  // mu = c y and E Y = y0, so E X_t = x0 + c y0 t.
  const auto spec = hbm::DriftSpec::linear_y(0.5, 1.0);
  hbm::RunningStats x;
  for (std::uint64_t p = 0; p < 20000; ++p) {
    RngStream r(15, p);
    x.add(hbm::euler_drifted(spec, {0.0, 1.0}, 0.5, 128, r).x());
  }
  EXPECT_LT(std::fabs(x.mean - 0.25) / x.std_error(), 4.0);
}
