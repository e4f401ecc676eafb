#pragma once

#include "wmg/core.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <numeric>

namespace wmg {

struct t_test_result {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

inline double mean_of(std::span<const double> v) {
  require(!v.empty(), "mean_of: empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
  require(v.size() >= 2, "variance_of: need at least two values");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

inline double two_sided_t_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// Welch two-sample t-test of mean(b) - mean(a).
inline t_test_result welch_t_test(std::span<const double> a, std::span<const double> b) {
  const double va = variance_of(a) / static_cast<double>(a.size());
  const double vb = variance_of(b) / static_cast<double>(b.size());
  if (va + vb <= 0.0) throw numeric_error("welch_t_test: both samples have zero variance");
  t_test_result r;
  r.t = (mean_of(b) - mean_of(a)) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p = two_sided_t_p(r.t, r.df);
  return r;
}

/// Paired t-test of mean(b - a).
inline t_test_result paired_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "paired_t_test: unequal sample sizes");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  const double v = variance_of(d);
  t_test_result r;
  r.df = static_cast<double>(d.size() - 1);
  if (v <= 0.0) {
    const double m = mean_of(d);
    if (m == 0.0) throw numeric_error("paired_t_test: all differences are zero");
    r.t = m > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = mean_of(d) / std::sqrt(v / static_cast<double>(d.size()));
  r.p = two_sided_t_p(r.t, r.df);
  return r;
}

struct sign_test_result {
  int positive = 0;  // pairs with b > a
  int n = 0;         // non-tied pairs
  double p = 1.0;    // one-sided: P(X >= positive) under Binomial(n, 1/2)
};

inline sign_test_result sign_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "sign_test: unequal sample sizes");
  sign_test_result r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] > a[i]) ++r.positive;
    if (b[i] != a[i]) ++r.n;
  }
  if (r.n == 0) return r;
  if (r.positive == 0) return r;
  boost::math::binomial dist(r.n, 0.5);
  r.p = boost::math::cdf(boost::math::complement(dist, r.positive - 1));
  return r;
}

/// Pearson chi-square goodness of fit against equal expected counts.
inline double chi_square_uniform_p(std::span<const std::size_t> counts) {
  require(counts.size() >= 2, "chi_square_uniform_p: need at least two cells");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  require(total > 0, "chi_square_uniform_p: no observations");
  const double expected = total / static_cast<double>(counts.size());
  double chi2 = 0.0;
  for (auto c : counts) chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

}  // namespace wmg
