#include "fueltrends/simexp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fueltrends/data.hpp"
#include "fueltrends/distributions.hpp"
#include "fueltrends/special.hpp"

namespace fueltrends::simexp {

namespace {

constexpr double kPhiRate = 1e-3;

double log_logistic(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

// posterior summaries for one fit, on the marginal-mean scale
struct FitSummary {
  std::vector<double> sd;                      // per component
  double mse = 0.0;                            // vs the true means
  std::vector<std::vector<double>> sorted_mu;  // per component, for quantiles
};

FitSummary summarize(const std::vector<std::vector<double>>& draws,
                     const std::vector<double>& truth) {
  const int k = static_cast<int>(truth.size());
  FitSummary s;
  s.sorted_mu.assign(k, {});
  for (int comp = 0; comp < k; ++comp) {
    std::vector<double>& col = s.sorted_mu[comp];
    col.reserve(draws.size());
    for (const auto& row : draws) col.push_back(row[comp]);
    s.sd.push_back(sd_of(col));
    for (double x : col) s.mse += (x - truth[comp]) * (x - truth[comp]);
    std::sort(col.begin(), col.end());
  }
  s.mse /= static_cast<double>(draws.size() * k);
  return s;
}

}  // namespace

std::vector<std::vector<double>> fit_composition(
    const std::vector<std::vector<long long>>& counts, const std::vector<long long>& sizes,
    int k, const mcmc::McmcConfig& config) {
  if (k < 2) throw std::invalid_argument("simexp: need at least two categories");
  if (counts.size() != sizes.size()) {
    throw std::invalid_argument("simexp: counts and sizes misaligned");
  }
  for (size_t s = 0; s < counts.size(); ++s) {
    long long tot = 0;
    for (long long v : counts[s]) {
      if (v < 0) throw std::invalid_argument("simexp: negative count");
      tot += v;
    }
    if (static_cast<int>(counts[s].size()) != k || tot != sizes[s]) {
      throw std::invalid_argument("simexp: count row does not match its size");
    }
  }

  // coordinates: k-1 stick logits, then log phi
  mcmc::GibbsProgram prog;
  prog.n = k;
  for (int d = 0; d < k; ++d) prog.blocks.push_back({{d}, false});
  auto logdens = [counts, sizes, k](const double* x) {
    double lp = 0.0;
    std::vector<double> nu(k - 1);
    for (int i = 0; i < k - 1; ++i) {
      nu[i] = clamp(logistic(x[i]), 1e-12, 1.0 - 1e-12);
      // Beta(1, k-1-i) stick with its logit Jacobian folded in
      lp += log_logistic(x[i]) + (k - 1 - i) * log_logistic(-x[i]);
    }
    double phi = std::exp(x[k - 1]);
    lp += -kPhiRate * phi + x[k - 1];
    dist::GDParams par = dist::reparam(nu, std::vector<double>(k - 1, phi));
    for (size_t s = 0; s < counts.size(); ++s) lp += dist::log_pmf_gdm(counts[s], par);
    return lp;
  };
  prog.full_logdens = logdens;
  prog.block_logdens = [logdens](int, const double* x) { return logdens(x); };
  prog.init = [k](std::vector<double>& x, Rng& rng) {
    x.assign(k, 0.0);
    for (int i = 0; i < k - 1; ++i) x[i] = 0.5 * rnorm(rng);
    x[k - 1] = std::log(50.0) + 0.5 * rnorm(rng);
  };
  prog.emit = [k](const std::vector<double>& x, std::vector<double>& out) {
    std::vector<double> nu(k - 1);
    for (int i = 0; i < k - 1; ++i) nu[i] = clamp(logistic(x[i]), 1e-12, 1.0 - 1e-12);
    out = dist::marginal_means(nu);
  };

  mcmc::PosteriorDraws fit =
      mcmc::run_chains([&prog](int) { return prog; }, config, Exec::serial);
  std::vector<std::vector<double>> pooled;
  pooled.reserve(static_cast<size_t>(fit.total_draws()));
  for (const auto& chain : fit.chains) {
    for (const auto& draw : chain.draws) pooled.push_back(draw);
  }
  return pooled;
}

ExperimentResult run_experiment(const synth::AppendixAData& data, const ExperimentConfig& cfg) {
  if (data.countries.empty()) throw std::invalid_argument("simexp: no countries");
  if (cfg.n_grid.empty()) throw std::invalid_argument("simexp: empty n grid");
  for (long long n : cfg.n_grid) {
    if (n < 1) throw std::invalid_argument("simexp: grid entries must be positive");
  }
  const int nc = static_cast<int>(data.countries.size());
  const int k = data.k;
  const std::vector<double> probs = {0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975};

  long long qn = cfg.n_grid.front();
  for (long long n : cfg.n_grid) qn = std::max(qn, n);
  if (std::find(cfg.n_grid.begin(), cfg.n_grid.end(), cfg.quantile_n) != cfg.n_grid.end()) {
    qn = cfg.quantile_n;
  }

  auto seed_for = [&cfg](int c) {
    mcmc::McmcConfig mc = cfg.mcmc;
    mc.seed = derive_seed(cfg.mcmc.seed, static_cast<std::uint64_t>(c) + 1);
    return mc;
  };

  ExperimentResult out;
  out.n_grid = cfg.n_grid;

  std::vector<FitSummary> base(nc);
  parallel_for(nc, cfg.exec, [&](int c) {
    const auto& ct = data.countries[c];
    base[c] = summarize(fit_composition(ct.counts, ct.sizes, k, seed_for(c)), ct.mu);
  });
  for (int c = 0; c < nc; ++c) {
    for (double sd : base[c].sd) out.baseline_sd.push_back(sd);
    out.baseline_mse.push_back(base[c].mse);
  }

  for (long long n : cfg.n_grid) {
    std::vector<FitSummary> approx(nc);
    parallel_for(nc, cfg.exec, [&](int c) {
      const auto& ct = data.countries[c];
      std::vector<std::vector<long long>> counts;
      std::vector<long long> sizes(ct.counts.size(), n);
      for (size_t s = 0; s < ct.counts.size(); ++s) {
        std::vector<double> props(k);
        for (int comp = 0; comp < k; ++comp) {
          props[comp] =
              static_cast<double>(ct.counts[s][comp]) / static_cast<double>(ct.sizes[s]);
        }
        counts.push_back(data::to_counts_simple(props, n));
      }
      approx[c] = summarize(fit_composition(counts, sizes, k, seed_for(c)), ct.mu);
    });

    NSummary s;
    s.n = n;
    for (int c = 0; c < nc; ++c) {
      for (int comp = 0; comp < k; ++comp) {
        s.sd_approx.push_back(approx[c].sd[comp]);
        s.sd_gap.push_back(std::fabs(approx[c].sd[comp] - base[c].sd[comp]));
      }
      s.mse_approx.push_back(approx[c].mse);
      s.mse_gap.push_back(std::fabs(approx[c].mse - base[c].mse));
      if (n == qn) {
        for (int comp = 0; comp < k; ++comp) {
          for (double p : probs) {
            out.quantile_pairs.push_back({c, comp, p,
                                          quantile_sorted(base[c].sorted_mu[comp], p),
                                          quantile_sorted(approx[c].sorted_mu[comp], p)});
          }
        }
      }
    }
    s.median_sd_gap = median_of(s.sd_gap);
    s.median_mse_gap = median_of(s.mse_gap);
    out.by_n.push_back(std::move(s));
  }

  std::vector<double> qb, qa;
  for (const auto& p : out.quantile_pairs) {
    qb.push_back(p.baseline);
    qa.push_back(p.approx);
  }
  out.quantile_r = pearson(qb, qa);
  return out;
}

}  // namespace fueltrends::simexp
