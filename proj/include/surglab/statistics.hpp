// Rank statistics: Spearman's rho and the Wilcoxon signed-rank test.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "surglab/types.hpp"

namespace surglab {

/// 1-based ranks; tied values share the mean of their ranks.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

struct SpearmanResult {
  double rho = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Pearson correlation of average ranks; two-tailed p from Student's t with
/// n-2 degrees of freedom.
inline SpearmanResult spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman_rho: length mismatch");
  if (x.size() < 3) throw ValidationError("spearman_rho: need at least 3 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("spearman_rho: constant input");
  SpearmanResult r;
  r.n = x.size();
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(r.rho) >= 1.0) {
    r.p = 0.0;
  } else {
    const double df = n - 2.0;
    const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
    boost::math::students_t dist(df);
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  return r;
}

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w = 0.0;  // min(w_plus, w_minus)
  double p = 1.0;
  double z = 0.0;
  double effect_size = 0.0;  // |z| / sqrt(n)
  std::size_t n = 0;         // nonzero differences
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactMax = 20;

/// Paired two-tailed signed-rank test of a against b. Zero differences are
/// dropped and tied |differences| get average ranks. Up to 20 pairs the p
/// value is exact (full null distribution of W+ over sign flips); above that
/// a normal approximation with tie and continuity corrections is used. z is
/// always the normal-approximation score and feeds the effect size.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("wilcoxon: length mismatch");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) diff.push_back(a[i] - b[i]);
  if (diff.size() < 6)
    throw ValidationError("wilcoxon: need at least 6 nonzero differences, got " + std::to_string(diff.size()));

  std::vector<double> mags(diff.size());
  std::transform(diff.begin(), diff.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(mags);

  WilcoxonResult r;
  r.n = diff.size();
  for (std::size_t i = 0; i < diff.size(); ++i) (diff[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  r.w = std::min(r.w_plus, r.w_minus);

  const double n = static_cast<double>(r.n);
  const double mean = n * (n + 1.0) / 4.0;
  double ties = 0.0;
  {
    auto sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      ties += t * t * t - t;
      i = j + 1;
    }
  }
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
  const double dev = r.w_plus - mean;
  const double corrected = std::max(0.0, std::abs(dev) - 0.5);
  r.z = var > 0.0 ? std::copysign(corrected / std::sqrt(var), dev) : 0.0;
  r.effect_size = std::abs(r.z) / std::sqrt(n);

  if (r.n <= kWilcoxonExactMax) {
    // Doubled ranks are integers even with ties (ranks are multiples of 0.5).
    std::vector<std::size_t> twice(r.n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < r.n; ++i) {
      twice[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
      total += twice[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t t : twice)
      for (std::size_t s = total; s >= t; --s) {
        count[s] += count[s - t];
        if (s == t) break;
      }
    const auto observed = static_cast<std::size_t>(std::llround(2.0 * r.w_plus));
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s <= observed) lower += count[s];
      if (s >= observed) upper += count[s];
    }
    const double all = std::ldexp(1.0, static_cast<int>(r.n));
    r.p = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    r.exact = true;
  } else {
    r.p = std::min(1.0, std::erfc(std::abs(r.z) / std::sqrt(2.0)));
  }
  return r;
}

}  // namespace surglab
