#pragma once
// Thin wrappers over the distribution functions the library needs.

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <stdexcept>

namespace condinf {

inline double chi2_quantile(int df, double p) {
  if (df < 1) throw std::invalid_argument("chi2_quantile: df must be positive");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p outside (0,1)");
  return boost::math::quantile(boost::math::chi_squared(static_cast<double>(df)), p);
}

inline double chi2_cdf(int df, double x) {
  if (df < 1) throw std::invalid_argument("chi2_cdf: df must be positive");
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared(static_cast<double>(df)), x);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

// CDF of the Kolmogorov sup-distance distribution, K(x) = P(sup|B(t)| <= x).
inline double kolmogorov_cdf(double x) {
  if (x <= 0.05) return 0.0;
  double s = 0.0;
  for (int j = 1; j <= 101; ++j) {
    const double term = std::exp(-2.0 * j * j * x * x);
    s += (j % 2 ? term : -term);
    if (term < 1e-16) break;
  }
  return 1.0 - 2.0 * s;
}

// Asymptotic critical value for the Kolmogorov-Smirnov distance at level
// alpha with n observations: c_alpha / sqrt(n).
inline double ks_critical_value(double alpha, long n) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ks_critical_value: bad alpha");
  if (n < 1) throw std::invalid_argument("ks_critical_value: n must be positive");
  double lo = 0.2, hi = 3.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_cdf(mid) < 1.0 - alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) / std::sqrt(static_cast<double>(n));
}

}  // namespace condinf
