#include "fueltrends/distributions.hpp"

#include <cmath>
#include <stdexcept>

#include "fueltrends/special.hpp"

namespace fueltrends::dist {

namespace {

void check_params(const GDParams& par) {
  if (par.alpha.size() != par.beta.size() || par.alpha.empty())
    throw std::domain_error("gd: alpha/beta must be non-empty and equal length");
  for (size_t i = 0; i < par.alpha.size(); ++i) {
    if (!(par.alpha[i] > 0.0) || !(par.beta[i] > 0.0))
      throw std::domain_error("gd: shape parameters must be positive");
  }
}

}  // namespace

double log_pdf_gd(const std::vector<double>& p, const GDParams& par) {
  check_params(par);
  const int k = par.k();
  if (static_cast<int>(p.size()) != k) throw std::domain_error("log_pdf_gd: length mismatch");
  double sum = 0.0;
  for (double x : p) {
    if (!(x > 0.0) || !(x < 1.0)) throw std::domain_error("log_pdf_gd: p outside (0,1)");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > 1e-12) throw std::domain_error("log_pdf_gd: p does not sum to 1");

  // tail[i] = p_i + ... + p_{k-1}
  std::vector<double> tail(k);
  tail[k - 1] = p[k - 1];
  for (int i = k - 2; i >= 0; --i) tail[i] = tail[i + 1] + p[i];

  double lp = (par.beta[k - 2] - 1.0) * std::log(p[k - 1]);
  for (int i = 0; i < k - 1; ++i) {
    lp += (par.alpha[i] - 1.0) * std::log(p[i]) - log_beta(par.alpha[i], par.beta[i]);
    if (i >= 1) lp += (par.beta[i - 1] - par.alpha[i] - par.beta[i]) * std::log(tail[i]);
  }
  return lp;
}

double log_pmf_gdm(const std::vector<long long>& v, const GDParams& par) {
  check_params(par);
  const int k = par.k();
  if (static_cast<int>(v.size()) != k) throw std::domain_error("log_pmf_gdm: length mismatch");
  for (long long x : v) {
    if (x < 0) throw std::domain_error("log_pmf_gdm: negative count");
  }
  // tail[i] = v_i + ... + v_{k-1}
  std::vector<double> tail(k + 1, 0.0);
  for (int i = k - 1; i >= 0; --i) tail[i] = tail[i + 1] + static_cast<double>(v[i]);

  double lp = std::lgamma(tail[0] + 1.0) - std::lgamma(static_cast<double>(v[k - 1]) + 1.0);
  for (int i = 0; i < k - 1; ++i) {
    double vi = static_cast<double>(v[i]);
    lp += std::lgamma(vi + par.alpha[i]) + std::lgamma(tail[i + 1] + par.beta[i]) -
          log_beta(par.alpha[i], par.beta[i]) - std::lgamma(vi + 1.0) -
          std::lgamma(par.alpha[i] + par.beta[i] + tail[i]);
  }
  return lp;
}

double log_pmf_beta_binomial(long long v, double alpha, double beta, long long n) {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::domain_error("log_pmf_beta_binomial: shapes must be positive");
  if (n < 0 || v < 0 || v > n) throw std::domain_error("log_pmf_beta_binomial: bad counts");
  if (n == 0) return 0.0;
  double dv = static_cast<double>(v), dn = static_cast<double>(n);
  return log_choose(dn, dv) + log_beta(dv + alpha, dn - dv + beta) - log_beta(alpha, beta);
}

double log_pmf_outlier_mixture(long long v, double alpha, double beta, long long n, double rho) {
  if (!(rho >= 0.0) || !(rho <= 1.0))
    throw std::domain_error("log_pmf_outlier_mixture: rho outside [0,1]");
  double lu = -std::log(static_cast<double>(n) + 1.0);
  if (rho == 0.0) return lu;
  double lbb = log_pmf_beta_binomial(v, alpha, beta, n);
  if (rho == 1.0) return lbb;
  return log_sum_exp(std::log(rho) + lbb, std::log1p(-rho) + lu);
}

std::vector<long long> conditional_totals(const std::vector<long long>& v) {
  if (v.size() < 2) throw std::domain_error("conditional_totals: need k >= 2");
  long long n = 0;
  for (long long x : v) n += x;
  std::vector<long long> totals(v.size() - 1);
  long long used = 0;
  for (size_t i = 0; i + 1 < v.size(); ++i) {
    totals[i] = n - used;
    used += v[i];
  }
  return totals;
}

std::pair<double, double> reparam1(double nu, double phi) {
  if (!(nu > 0.0) || !(nu < 1.0)) throw std::domain_error("reparam: nu outside (0,1)");
  if (!(phi > 0.0)) throw std::domain_error("reparam: phi must be positive");
  return {nu * phi, (1.0 - nu) * phi};
}

GDParams reparam(const std::vector<double>& nu, const std::vector<double>& phi) {
  if (nu.size() != phi.size() || nu.empty())
    throw std::domain_error("reparam: nu/phi must be non-empty and equal length");
  GDParams par;
  par.alpha.resize(nu.size());
  par.beta.resize(nu.size());
  for (size_t i = 0; i < nu.size(); ++i) {
    auto [a, b] = reparam1(nu[i], phi[i]);
    par.alpha[i] = a;
    par.beta[i] = b;
  }
  return par;
}

std::vector<double> marginal_means(const std::vector<double>& nu) {
  if (nu.empty()) throw std::domain_error("marginal_means: empty nu");
  std::vector<double> mu(nu.size() + 1);
  double stick = 1.0;
  for (size_t i = 0; i < nu.size(); ++i) {
    if (!(nu[i] > 0.0) || !(nu[i] < 1.0))
      throw std::domain_error("marginal_means: nu outside (0,1)");
    mu[i] = nu[i] * stick;
    stick *= (1.0 - nu[i]);
  }
  mu[nu.size()] = stick;
  return mu;
}

std::vector<double> relative_means_from_marginal(const std::vector<double>& mu) {
  if (mu.size() < 2) throw std::domain_error("relative_means_from_marginal: need k >= 2");
  double sum = 0.0;
  for (double m : mu) {
    if (!(m > 0.0) || !(m < 1.0))
      throw std::domain_error("relative_means_from_marginal: mu outside (0,1)");
    sum += m;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::domain_error("relative_means_from_marginal: mu does not sum to 1");
  std::vector<double> nu(mu.size() - 1);
  double remaining = 1.0;
  for (size_t i = 0; i + 1 < mu.size(); ++i) {
    nu[i] = clamp(mu[i] / remaining, 1e-15, 1.0 - 1e-15);
    remaining -= mu[i];
  }
  return nu;
}

std::vector<double> sample_gd(const GDParams& par, Rng& rng) {
  check_params(par);
  const int k = par.k();
  std::vector<double> p(k);
  double stick = 1.0;
  for (int i = 0; i < k - 1; ++i) {
    double z = rbeta(rng, par.alpha[i], par.beta[i]);
    p[i] = z * stick;
    stick *= (1.0 - z);
  }
  double partial = 0.0;
  for (int i = 0; i < k - 1; ++i) partial += p[i];
  p[k - 1] = std::max(1.0 - partial, 0.0);
  return p;
}

std::vector<long long> sample_gdm(const GDParams& par, long long n, Rng& rng) {
  check_params(par);
  if (n < 0) throw std::domain_error("sample_gdm: negative total");
  const int k = par.k();
  std::vector<long long> v(k);
  long long remaining = n;
  for (int i = 0; i < k - 1; ++i) {
    double z = rbeta(rng, par.alpha[i], par.beta[i]);
    v[i] = rbinom(rng, remaining, z);
    remaining -= v[i];
  }
  v[k - 1] = remaining;
  return v;
}

}  // namespace fueltrends::dist
