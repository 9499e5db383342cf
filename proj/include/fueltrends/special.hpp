#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

// Small numeric helpers shared across modules. Everything works in log space
// through std::lgamma; no factorial tables.
namespace fueltrends {

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(exp(a) + exp(b)) without overflow; tolerates -inf inputs.
inline double log_sum_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  double m = a > b ? a : b;
  return m + std::log1p(std::exp(-(std::fabs(a - b))));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double logistic(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

double normal_cdf(double z);

// Regularized incomplete gamma P(a,x) and Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
inline double chi2_sf(double x, double df) { return gamma_q(0.5 * df, 0.5 * x); }

// Kolmogorov distribution tail Q(t) = P(sup|B| > t), asymptotic series.
double kolmogorov_q(double t);

// One-sample Kolmogorov-Smirnov test of `sample` against a continuous cdf.
// Returns the asymptotic p-value; sample is copied and sorted internally.
double ks_test_pvalue(std::vector<double> sample, const std::function<double(double)>& cdf);

// Quantile of sorted values, linear interpolation (type-7). v must be sorted.
double quantile_sorted(const std::vector<double>& v, double q);

// Pearson correlation of two equal-length vectors.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace fueltrends
