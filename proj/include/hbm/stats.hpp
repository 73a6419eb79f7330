#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

namespace hbm {

/// Running mean and sum of squared deviations (Welford), with the
/// Chan et al. pairwise merge.
struct RunningStats {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }

  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(o.n);
    const double d = o.mean - mean;
    const double total = na + nb;
    mean += d * nb / total;
    m2 += o.m2 + d * d * na * nb / total;
    n += o.n;
  }

  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double std_error() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

/// Merges per-block statistics as a balanced binary tree in index order, so
/// the result depends only on the block contents.
inline RunningStats merge_pairwise(std::vector<RunningStats> blocks) {
  if (blocks.empty()) return {};
  while (blocks.size() > 1) {
    std::vector<RunningStats> next;
    next.reserve((blocks.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < blocks.size(); i += 2) {
      RunningStats s = blocks[i];
      s.merge(blocks[i + 1]);
      next.push_back(s);
    }
    if (blocks.size() % 2 == 1) next.push_back(blocks.back());
    blocks = std::move(next);
  }
  return blocks.front();
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Asymptotic Kolmogorov tail P(K > lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;  ///< sup |F1 - F2|
  double p_value = 1.0;
};

/// One-sample KS test of `sample` against a continuous CDF.
inline KsResult ks_one_sample(std::vector<double> sample,
                              const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

/// Two-sample KS test.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

/// z-score of the difference of two independent estimates.
inline double z_score(double m1, double se1, double m2, double se2) {
  const double se = std::hypot(se1, se2);
  if (se == 0.0) return m1 == m2 ? 0.0 : std::copysign(INFINITY, m1 - m2);
  return (m1 - m2) / se;
}

}  // namespace hbm
