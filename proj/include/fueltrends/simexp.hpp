#pragma once

#include <vector>

#include "fueltrends/mcmc.hpp"
#include "fueltrends/parallel.hpp"
#include "fueltrends/synth.hpp"

namespace fueltrends::simexp {

// Posterior for one k-cell composition shared by a few surveys: stick means
// on the logit scale plus a common log dispersion, with flat-Dirichlet stick
// priors and an Exp(1e-3) dispersion prior. Returns pooled draws of the
// marginal cell means, one length-k row per draw.
std::vector<std::vector<double>> fit_composition(
    const std::vector<std::vector<long long>>& counts, const std::vector<long long>& sizes,
    int k, const mcmc::McmcConfig& config);

struct NSummary {
  long long n = 0;
  std::vector<double> sd_approx;   // per (country, component)
  std::vector<double> mse_approx;  // per country
  std::vector<double> sd_gap;      // |sd_approx - sd_baseline|
  std::vector<double> mse_gap;     // |mse_approx - mse_baseline|
  double median_sd_gap = 0.0;
  double median_mse_gap = 0.0;
};

struct QuantilePair {
  int country = 0;
  int component = 0;
  double prob = 0.0;
  double baseline = 0.0;
  double approx = 0.0;
};

struct ExperimentResult {
  std::vector<long long> n_grid;
  std::vector<double> baseline_sd;   // per (country, component)
  std::vector<double> baseline_mse;  // per country, against the true means
  std::vector<NSummary> by_n;
  std::vector<QuantilePair> quantile_pairs;
  double quantile_r = 0.0;  // correlation of the paired quantiles
};

struct ExperimentConfig {
  std::vector<long long> n_grid = {10,   20,   30,    50,    100,   300,
                                   1000, 3000, 10000, 30000, 100000};
  // grid entry whose posteriors feed the quantile table; falls back to the
  // largest entry when absent from the grid
  long long quantile_n = 10000;
  mcmc::McmcConfig mcmc;
  Exec exec = Exec::serial;

  ExperimentConfig() {
    mcmc.chains = 2;
    mcmc.iterations = 4000;
    mcmc.burn_in = 2000;
    mcmc.thin = 2;
  }
};

// Fits every country once at the real survey sizes and once per grid entry
// on proportions rebuilt as counts with denominator n. The paired fits share
// one seed per country so sampling noise largely cancels in the gaps.
ExperimentResult run_experiment(const synth::AppendixAData& data, const ExperimentConfig& cfg);

}  // namespace fueltrends::simexp
