#include <cmath>

#include <gtest/gtest.h>

#include "hbm/parametrix.hpp"

namespace {

using hbm::DriftSpec;
using hbm::HyperbolicPoint;

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

}  // namespace

TEST(Parametrix, MajorantFormula) {
  // (3 K0 / 2)^n q t^{n-1} / (n-1)!
  EXPECT_DOUBLE_EQ(hbm::hn_majorant(1, 0.5, 1.0, 2.0), 3.0);
  EXPECT_NEAR(hbm::hn_majorant(3, 0.5, 1.0, 2.0), 1.5 * 1.5 * 1.5 * 0.25 / 2.0 * 2.0, 1e-14);
  EXPECT_THROW(hbm::hn_majorant(0, 0.5, 1.0, 1.0), std::invalid_argument);
}

TEST(Parametrix, RemainderIsTheExponentialTail) {
  const double a = 1.5 * 0.5 * 0.5;
  double head = 1.0 + a + a * a / 2.0;
  EXPECT_NEAR(hbm::parametrix_remainder_bound(0.5, 0.5, 2, 1.0), std::exp(a) - head, 1e-15);
  EXPECT_NEAR(hbm::parametrix_remainder_bound(0.5, 0.5, 0, 3.0), 3.0 * std::expm1(a), 1e-14);
}

TEST(Parametrix, FirstTermIsThetaTimesKernel) {
  const auto spec = DriftSpec::linear_y(0.5, 0.5);
  const HyperbolicPoint z(0.0, 1.0), z2(0.3, 1.2);
  const double expect = hbm::theta(spec, 0.5, z, z2).value * hbm::q2_density(0.5, z, z2);
  EXPECT_DOUBLE_EQ(hbm::h1(spec, 0.5, z, z2), expect);
  const auto term = hbm::hn_convolution(spec, 1, 0.5, z, z2);
  EXPECT_DOUBLE_EQ(term.value, expect);
  EXPECT_LE(std::fabs(term.value), term.majorant);
}

// The majorant of h1 inherits the failure of the theta bound.
TEST(Parametrix, FirstTermExceedsMajorantAtShortTimes) {
  const auto spec = DriftSpec::linear_y(1.0, 1.0);
  const auto term = hbm::hn_convolution(spec, 1, 0.1, {0.0, 1.0}, {1.0, 1.0});
  EXPECT_GT(std::fabs(term.value), term.majorant);
}

TEST(Parametrix, KernelTableInterpolates) {
  const hbm::KernelTable tab(0.3, {}, 1.0 / 24.0);
  for (double r : {0.0, 0.013, 0.4, 1.77, 3.1}) {
    const auto e = tab.eval(r);
    const auto d = hbm::mckean_log_derivative(0.3, r);
    EXPECT_NEAR(e.log_p2, d.log_p2, 1e-8);
    EXPECT_NEAR(e.dlog_dr, d.dlog_dr, 1e-7 * (1.0 + std::fabs(d.dlog_dr)));
  }
  EXPECT_EQ(tab.eval(tab.r_max() + 1.0).log_p2, -INFINITY);
}

TEST(Parametrix, ConvolutionReproducesChapmanKolmogorov) {
  // int_0^t int q(t - s, z, w) q(s, w, z2) dw ds = t q(t, z, z2).
  const HyperbolicPoint z(0.0, 1.0), z2(0.5, 1.3);
  const double t = 0.5;
  const hbm::detail::ConvolutionNodes nodes(hbm::ConvolutionQuadSpec{});
  auto a = [&](double u, const HyperbolicPoint& w) { return hbm::q2_density(u, z, w); };
  auto b = [&](double s, const HyperbolicPoint& w) { return hbm::q2_density(s, w, z2); };
  const double got = hbm::detail::convolve(t, z, z2, a, b, nodes);
  EXPECT_LT(rel(got, t * hbm::q2_density(t, z, z2)), 1e-7);
}

TEST(Parametrix, SecondTermIsWithinItsMajorantHere) {
  const auto spec = DriftSpec::linear_y(0.5, 0.5);
  const auto term = hbm::hn_convolution(spec, 2, 0.5, {0.0, 1.0}, {0.3, 1.0},
                                        hbm::ConvolutionQuadSpec::coarse());
  EXPECT_NEAR(term.value, -0.052386, 2e-3);
  EXPECT_LE(std::fabs(term.value), term.majorant);
}

TEST(Parametrix, DriftlessDensityIsTheKernel) {
  const HyperbolicPoint z(0.0, 1.0), z2(0.4, 0.8);
  const auto d = hbm::density_parametrix(DriftSpec::zero(), 0.5, z, z2, 2);
  EXPECT_EQ(d.value, hbm::q2_density(0.5, z, z2));
  EXPECT_EQ(d.terms, (std::vector<double>{0.0, 0.0}));
}

TEST(Parametrix, CorrectionsConvergeUnderRefinement) {
  const auto spec = DriftSpec::sine_x(0.5, 0.5);
  const HyperbolicPoint z(0.2, 1.0);
  const std::vector<HyperbolicPoint> targets = {{0.0, 1.0}, {0.6, 1.3}};
  const auto coarse = hbm::density_parametrix_many(spec, 0.5, z, targets, 1,
                                                   hbm::ConvolutionQuadSpec::coarse());
  const auto fine = hbm::density_parametrix_many(spec, 0.5, z, targets, 1);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    EXPECT_NEAR(coarse[i].terms[0], fine[i].terms[0], 1e-4 * fine[i].q2);
    EXPECT_LT(std::fabs(fine[i].terms[0]), fine[i].q2);
  }
}

TEST(Parametrix, OrdersAboveThreeAreRefused) {
  const auto spec = DriftSpec::linear_y(0.5, 0.5);
  EXPECT_THROW(hbm::hn_convolution(spec, 4, 0.5, {0.0, 1.0}, {0.3, 1.0}), hbm::UnsupportedOrder);
  EXPECT_THROW(hbm::density_parametrix(spec, 0.5, {0.0, 1.0}, {0.3, 1.0}, 4), hbm::UnsupportedOrder);
  hbm::ConvolutionQuadSpec bad;
  bad.table_angular = 7;
  EXPECT_THROW(bad.validate(), hbm::ConfigError);
}
