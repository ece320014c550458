#pragma once

// Brute-force reference implementations used to check the statistics code.

#include <cmath>
#include <cstddef>
#include <vector>

namespace surglab::oracle {

// 1 + number of smaller values + half the number of other equal values.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) less += 1.0;
      if (j != i && x[j] == x[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + equal / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

// Continued fraction for the regularized incomplete beta function.
inline double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a - 1.0 + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + 1.0 + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h;
}

inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

// Two-tailed p of Student's t with df degrees of freedom.
inline double t_two_tailed(double t, double df) { return incomplete_beta(df / 2.0, 0.5, df / (df + t * t)); }

struct Spearman {
  double rho, p;
};

inline Spearman spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const double rho = pearson(ranks(x), ranks(y));
  const double df = static_cast<double>(x.size()) - 2.0;
  if (std::abs(rho) >= 1.0) return {rho, 0.0};
  return {rho, t_two_tailed(rho * std::sqrt(df / (1.0 - rho * rho)), df)};
}

struct Wilcoxon {
  double w_plus, w_minus, p;
  std::size_t n;
};

// Exact two-tailed p by listing all 2^n sign assignments of the ranks.
inline Wilcoxon wilcoxon(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d, mags;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) {
      d.push_back(a[i] - b[i]);
      mags.push_back(std::abs(a[i] - b[i]));
    }
  const auto r = ranks(mags);
  Wilcoxon out{0, 0, 0, d.size()};
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? out.w_plus : out.w_minus) += r[i];
  double lower = 0, upper = 0;
  const std::size_t total = std::size_t{1} << d.size();
  for (std::size_t mask = 0; mask < total; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (mask >> i & 1) w += r[i];
    if (w <= out.w_plus) lower += 1;
    if (w >= out.w_plus) upper += 1;
  }
  out.p = std::min(1.0, 2.0 * std::min(lower, upper) / static_cast<double>(total));
  return out;
}

}  // namespace surglab::oracle
