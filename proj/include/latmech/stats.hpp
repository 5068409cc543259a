#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "latmech/error.hpp"

namespace latmech {

/// Pairwise (cascade) summation; the result depends only on the order of
/// `xs`, not on how the caller produced them.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct EstimateWithCI {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
};

/// Mean and standard error (sample stddev / sqrt(n)) of i.i.d. draws.
inline EstimateWithCI estimate_from_samples(std::span<const double> xs) {
  require(xs.size() >= 2, ErrorKind::InvalidArgument, "estimate needs at least two samples");
  const double n = static_cast<double>(xs.size());
  const double mean = pairwise_sum(xs) / n;
  std::vector<double> sq(xs.size());
  std::transform(xs.begin(), xs.end(), sq.begin(), [mean](double x) { return (x - mean) * (x - mean); });
  const double var = pairwise_sum(sq) / (n - 1.0);
  return {mean, std::sqrt(var / n), xs.size()};
}

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::InvalidArgument, "KS needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Asymptotic two-sample KS critical value at level `alpha`:
/// sqrt(-ln(alpha/2)/2) * sqrt((n+m)/(n*m)).
inline double ks_critical_value(double alpha, std::size_t n, std::size_t m) {
  const double c = std::sqrt(-std::log(alpha / 2.0) / 2.0);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return c * std::sqrt((dn + dm) / (dn * dm));
}

/// Binomial standard deviation of an empirical rate at true rate p over n draws.
inline double binomial_sigma(double p, std::size_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace latmech
