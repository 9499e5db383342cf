#pragma once

#include <utility>
#include <vector>

#include "fueltrends/rng.hpp"

namespace fueltrends::dist {

// Stick-breaking parameter pairs for a k-category generalized Dirichlet:
// alpha[i], beta[i] for the i-th conditional, i = 0..k-2.
struct GDParams {
  std::vector<double> alpha;
  std::vector<double> beta;

  int k() const { return static_cast<int>(alpha.size()) + 1; }
};

// Density of the generalized Dirichlet at a point p on the open k-simplex.
// Throws std::domain_error unless all p_i in (0,1), sum(p) == 1 +- 1e-12 and
// all alpha, beta > 0.
double log_pdf_gd(const std::vector<double>& p, const GDParams& par);

// Joint mass of counts v (one per category, non-negative, n = sum v) under
// the generalized-Dirichlet-multinomial with the given stick parameters.
double log_pmf_gdm(const std::vector<long long>& v, const GDParams& par);

// Beta-binomial mass of v successes out of n with shape (alpha, beta).
// n = 0 is allowed (point mass at v = 0).
double log_pmf_beta_binomial(long long v, double alpha, double beta, long long n);

// rho * BetaBinomial + (1 - rho) * DiscreteUniform{0..n}; rho is the weight
// on the beta-binomial component, rho in [0,1].
double log_pmf_outlier_mixture(long long v, double alpha, double beta, long long n, double rho);

// Conditional totals n_i = n - sum_{j<i} v_j for the stick factorization.
std::vector<long long> conditional_totals(const std::vector<long long>& v);

// (nu, phi) -> (alpha, beta) = (nu*phi, (1-nu)*phi), elementwise.
GDParams reparam(const std::vector<double>& nu, const std::vector<double>& phi);
std::pair<double, double> reparam1(double nu, double phi);

// Marginal category means from relative means: mu_1 = nu_1,
// mu_j = nu_j * prod_{i<j}(1 - nu_i), mu_k = prod(1 - nu_i). Length k.
std::vector<double> marginal_means(const std::vector<double>& nu);

// Inverse of marginal_means for mu in the open simplex (length k -> k-1).
std::vector<double> relative_means_from_marginal(const std::vector<double>& mu);

// Draw a composition point from the generalized Dirichlet.
std::vector<double> sample_gd(const GDParams& par, Rng& rng);

// Draw counts summing to n: sequential Beta then Binomial down the sticks.
std::vector<long long> sample_gdm(const GDParams& par, long long n, Rng& rng);

}  // namespace fueltrends::dist
