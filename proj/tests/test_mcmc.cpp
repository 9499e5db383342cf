#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fueltrends/data.hpp"
#include "fueltrends/distributions.hpp"
#include "fueltrends/mcmc.hpp"
#include "fueltrends/model.hpp"
#include "fueltrends/special.hpp"

using namespace fueltrends;
namespace fm = fueltrends::model;
using mcmc::GibbsProgram;
using mcmc::McmcConfig;

namespace {

GibbsProgram scalar_target(const std::function<double(double)>& logdens) {
  GibbsProgram p;
  p.n = 1;
  p.blocks.push_back({{0}, false});
  p.block_logdens = [logdens](int, const double* x) { return logdens(x[0]); };
  p.full_logdens = [logdens](const double* x) { return logdens(x[0]); };
  p.init = [](std::vector<double>& x, Rng& rng) { x[0] = rnorm(rng); };
  return p;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// batch-means standard error of the mean of one correlated trace
double mcse_batch_means(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  const int len = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  const int nb = n / len;
  const double m = mean_of(v);
  double ss = 0.0;
  for (int b = 0; b < nb; ++b) {
    double bm = 0.0;
    for (int i = 0; i < len; ++i) bm += v[b * len + i];
    bm /= len;
    ss += (bm - m) * (bm - m);
  }
  const double var_mean = len * ss / (nb - 1) / (nb * len);
  return std::sqrt(var_mean);
}

std::vector<double> column(const mcmc::ChainResult& chain, int k) {
  std::vector<double> out;
  out.reserve(chain.draws.size());
  for (const auto& d : chain.draws) out.push_back(d[k]);
  return out;
}

}  // namespace

TEST_CASE("config validation and draw bookkeeping") {
  McmcConfig good;
  good.validate();
  CHECK(good.draws_per_chain() == 1000);

  auto broken = [&](auto&& tweak) {
    McmcConfig c;
    tweak(c);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  };
  broken([](McmcConfig& c) { c.chains = 0; });
  broken([](McmcConfig& c) { c.iterations = 0; });
  broken([](McmcConfig& c) { c.burn_in = -1; });
  broken([](McmcConfig& c) { c.burn_in = c.iterations; });
  broken([](McmcConfig& c) { c.thin = 0; });
  broken([](McmcConfig& c) { c.adaptation.interval = 0; });
  broken([](McmcConfig& c) { c.adaptation.target_scalar = 1.0; });
  broken([](McmcConfig& c) { c.init_retries = 0; });

  McmcConfig odd;
  odd.iterations = 107;
  odd.burn_in = 30;
  odd.thin = 10;
  odd.seed = 7;
  CHECK(odd.draws_per_chain() == 7);
  GibbsProgram p = scalar_target([](double z) { return -0.5 * z * z; });
  auto res = mcmc::run_chain(p, odd, 0);
  CHECK(static_cast<int>(res.draws.size()) == 7);
  CHECK(res.acceptance.size() == 1);
  CHECK(res.final_x.size() == 1);

  // a program with no parameter blocks is legal: only the custom sweep runs
  GibbsProgram empty;
  empty.n = 1;
  empty.full_logdens = [](const double*) { return 0.0; };
  empty.init = [](std::vector<double>& x, Rng&) { x[0] = 3.5; };
  auto res2 = mcmc::run_chain(empty, odd, 0);
  CHECK(static_cast<int>(res2.draws.size()) == 7);
  for (const auto& d : res2.draws) CHECK(d[0] == 3.5);
}

TEST_CASE("a chain is a pure function of seed and chain index") {
  GibbsProgram p = scalar_target([](double z) { return -0.5 * z * z; });
  McmcConfig cfg;
  cfg.iterations = 3000;
  cfg.burn_in = 1000;
  cfg.thin = 2;
  cfg.seed = 42;

  auto a = mcmc::run_chain(p, cfg, 0);
  auto b = mcmc::run_chain(p, cfg, 0);
  REQUIRE(a.draws.size() == b.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i) CHECK(a.draws[i][0] == b.draws[i][0]);
  CHECK(a.scales_final == b.scales_final);

  auto c = mcmc::run_chain(p, cfg, 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.draws.size(); ++i) any_diff |= a.draws[i][0] != c.draws[i][0];
  CHECK(any_diff);
}

TEST_CASE("adaptation tunes toward the target rate and freezes at burn-in") {
  GibbsProgram p = scalar_target([](double z) { return -0.5 * z * z; });
  McmcConfig cfg;
  cfg.iterations = 12000;
  cfg.burn_in = 6000;
  cfg.thin = 2;
  cfg.seed = 5;

  auto res = mcmc::run_chain(p, cfg, 0);
  REQUIRE(res.scales_at_burnin.size() == 1);
  CHECK(res.scales_final == res.scales_at_burnin);
  // started at log(0.1); a unit normal wants a step near 2.4
  CHECK(res.scales_at_burnin[0] != doctest::Approx(std::log(0.1)));
  CHECK(res.acceptance[0] > 0.30);
  CHECK(res.acceptance[0] < 0.58);
  CHECK(std::exp(res.scales_at_burnin[0]) > 1.0);
  CHECK(std::exp(res.scales_at_burnin[0]) < 6.0);
}

TEST_CASE("binomial data with a flat prior reproduces the conjugate posterior") {
  // v = 3 of n = 10 at enormous precision collapses the likelihood to a
  // binomial, so a uniform prior on the probability gives Beta(4, 8)
  const double phi = 1e8;
  GibbsProgram p;
  p.n = 1;
  p.blocks.push_back({{0}, false});
  auto logdens = [phi](const double* x) {
    const double z = x[0];
    const double nu = logistic(z);
    const double jac = -std::log1p(std::exp(-std::fabs(z))) * 2.0 - std::fabs(z);
    return dist::log_pmf_beta_binomial(3, nu * phi, (1.0 - nu) * phi, 10) + jac;
  };
  p.block_logdens = [logdens](int, const double* x) { return logdens(x); };
  p.full_logdens = logdens;
  p.init = [](std::vector<double>& x, Rng& rng) { x[0] = 0.5 * rnorm(rng); };
  p.emit = [](const std::vector<double>& x, std::vector<double>& out) {
    out.assign(1, logistic(x[0]));
  };

  McmcConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 20000;
  cfg.burn_in = 5000;
  cfg.thin = 5;
  cfg.seed = 20240915;
  auto chains = mcmc::run_chains([&](int) { return p; }, cfg);
  REQUIRE(chains.draws_per_chain() == 3000);

  std::vector<double> all;
  std::vector<std::vector<double>> traces;
  double se2 = 0.0;
  for (const auto& ch : chains.chains) {
    auto tr = column(ch, 0);
    const double se = mcse_batch_means(tr);
    se2 += se * se;
    all.insert(all.end(), tr.begin(), tr.end());
    traces.push_back(std::move(tr));
  }
  const double mcse = std::sqrt(se2) / static_cast<double>(chains.chains.size());

  const double post_mean = 4.0 / 12.0;
  const double post_sd = std::sqrt(4.0 * 8.0 / (12.0 * 12.0 * 13.0));
  CHECK(std::fabs(mean_of(all) - post_mean) < 3.0 * mcse);
  CHECK(std::fabs(sd_of(all) - post_sd) < 0.01);
  CHECK(mcmc::psrf(traces) < 1.02);
}

TEST_CASE("with no data the chain reproduces its prior") {
  GibbsProgram p = scalar_target([](double z) { return -z * z / 200.0; });
  McmcConfig cfg;
  cfg.iterations = 60000;
  cfg.burn_in = 10000;
  cfg.thin = 25;
  cfg.seed = 99;
  auto res = mcmc::run_chain(p, cfg, 0);
  auto draws = column(res, 0);
  REQUIRE(draws.size() == 2000);
  const double pval =
      ks_test_pvalue(draws, [](double x) { return normal_cdf(x / 10.0); });
  CHECK(pval > 0.01);
}

TEST_CASE("a two-block sweep preserves the joint target") {
  // x ~ N(0,1), y | x ~ N(0.8 x, 0.6^2); the y marginal is standard normal
  auto logdens = [](const double* x) {
    const double r = x[1] - 0.8 * x[0];
    return -0.5 * x[0] * x[0] - r * r / (2.0 * 0.36);
  };
  GibbsProgram p;
  p.n = 2;
  p.blocks.push_back({{0}, false});
  p.blocks.push_back({{1}, false});
  p.block_logdens = [logdens](int, const double* x) { return logdens(x); };
  p.full_logdens = logdens;
  p.init = [](std::vector<double>& x, Rng& rng) {
    x[0] = rnorm(rng);
    x[1] = rnorm(rng);
  };

  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 40000;
  cfg.burn_in = 8000;
  cfg.thin = 16;
  cfg.seed = 17;
  auto chains = mcmc::run_chains([&](int) { return p; }, cfg);

  std::vector<double> ys;
  double sxy = 0.0;
  long long n = 0;
  for (const auto& ch : chains.chains)
    for (const auto& d : ch.draws) {
      ys.push_back(d[1]);
      sxy += d[0] * d[1];
      ++n;
    }
  REQUIRE(n == 4000);
  const double pval = ks_test_pvalue(ys, [](double v) { return normal_cdf(v); });
  CHECK(pval > 0.01);
  CHECK(std::fabs(sxy / n - 0.8) < 0.06);
}

TEST_CASE("count imputation settles into the enumerated stationary distribution") {
  // one survey: the whole top tier reported, charcoal 0.3 of households,
  // biomass and coal free with pair total 14, nothing below reported
  fm::ModelConfig cfg;
  for (int y = 1990; y <= 1999; ++y) cfg.years.push_back(y);
  cfg.K = 3;
  cfg.N = 20;

  data::SurveyRecord rec;
  rec.survey_id = "s1";
  rec.country = "bravo";
  rec.area = Area::urban;
  rec.year = 1995;
  rec.prop[static_cast<int>(Node::solid)] = 1.0;
  rec.prop[static_cast<int>(Node::kerosene)] = 0.0;
  rec.prop[static_cast<int>(Node::gas)] = 0.0;
  rec.prop[static_cast<int>(Node::electricity)] = 0.0;
  rec.prop[static_cast<int>(Node::others)] = 0.0;
  rec.prop[static_cast<int>(Node::charcoal)] = 0.3;

  data::UnUrbanSeries urban;
  urban.add("bravo", 1995, 0.4);
  data::RegionMap regions;
  regions.entries["bravo"] = {"north", "n-super"};

  fm::Model model(cfg, {rec}, urban, regions);
  REQUIRE(model.impute_groups().size() == 1);
  auto x = model.initial_x();
  auto counts = model.initial_counts();
  const int bio = static_cast<int>(Node::biomass);
  const int coal = static_cast<int>(Node::coal);
  REQUIRE(counts[0][bio] + counts[0][coal] == 14);
  REQUIRE(counts[0][static_cast<int>(Node::charcoal)] == 6);

  // exact target over the free count, from the two mid-tier stick terms
  const auto& idx = model.index();
  double nu8[8];
  model.conditional_means(x.data(), 0, 0, model.rows()[0].year_idx, nu8);
  const double phi_bio = std::exp(x[idx.logphi(4, 0, 0)]);
  const double phi_cha = std::exp(x[idx.logphi(5, 0, 0)]);
  const double rho = logistic(x[idx.logit_rho(0)]);
  std::vector<double> logp(15);
  for (int b = 0; b <= 14; ++b) {
    logp[b] = dist::log_pmf_outlier_mixture(b, nu8[4] * phi_bio, (1.0 - nu8[4]) * phi_bio, 20, rho) +
              dist::log_pmf_outlier_mixture(6, nu8[5] * phi_cha, (1.0 - nu8[5]) * phi_cha, 20 - b,
                                            rho);
  }
  double lse = logp[0];
  for (int b = 1; b <= 14; ++b) lse = log_sum_exp(lse, logp[b]);
  std::vector<double> prob(15);
  for (int b = 0; b <= 14; ++b) prob[b] = std::exp(logp[b] - lse);

  Rng rng = make_rng(314, 0);
  const int moves = 300000;
  const int lag = 10;
  std::vector<long long> hits(15, 0);
  long long accepted = 0;
  for (int m = 1; m <= moves; ++m) {
    accepted += model.imputation_move(0, x.data(), counts, 2.0, rng) ? 1 : 0;
    if (m % lag == 0) ++hits[static_cast<std::size_t>(counts[0][bio])];
  }
  CHECK(accepted > moves / 20);

  const double n_samp = moves / lag;
  double stat = 0.0;
  int dof = -1;
  double tail_obs = 0.0, tail_exp = 0.0;
  for (int b = 0; b <= 14; ++b) {
    const double expd = n_samp * prob[b];
    if (expd < 5.0) {
      tail_obs += static_cast<double>(hits[b]);
      tail_exp += expd;
      continue;
    }
    stat += (hits[b] - expd) * (hits[b] - expd) / expd;
    ++dof;
  }
  if (tail_exp > 0.0) {
    stat += (tail_obs - tail_exp) * (tail_obs - tail_exp) / tail_exp;
    ++dof;
  }
  REQUIRE(dof >= 3);
  CHECK(chi2_sf(stat, dof) > 0.01);
}

TEST_CASE("scale reduction separates mixed chains from stuck ones") {
  Rng rng = make_rng(7, 7);
  std::vector<std::vector<double>> iid(4, std::vector<double>(10000));
  for (auto& t : iid)
    for (auto& v : t) v = rnorm(rng);
  CHECK(mcmc::psrf(iid) < 1.01);

  std::vector<std::vector<double>> apart = iid;
  for (auto& v : apart[0]) v += 5.0;
  CHECK(mcmc::psrf(apart) > 1.5);

  std::vector<std::vector<double>> flat(3, std::vector<double>(50, 2.5));
  CHECK(mcmc::psrf(flat) == 1.0);

  std::vector<std::vector<double>> duplicated = {iid[0], iid[0]};
  CHECK(mcmc::psrf(duplicated) == 1.0);

  CHECK_THROWS_AS(mcmc::psrf({{1.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(mcmc::psrf({{1.0, 2.0}, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(mcmc::psrf({{1.0}, {2.0}}), std::invalid_argument);
}

TEST_CASE("interval coverage counts hits of the central replicate interval") {
  std::vector<double> grid(100);
  std::iota(grid.begin(), grid.end(), 0.0);
  std::vector<std::vector<double>> reps = {grid, grid, grid, grid};
  std::vector<double> obs = {50.0, 4.0, 98.0, -1.0};
  // type-7 90% interval of 0..99 is [4.95, 94.05], 99.9% is [0.0495, 98.9505]
  CHECK(mcmc::coverage(reps, obs, 0.90) == doctest::Approx(0.25));
  CHECK(mcmc::coverage(reps, obs, 0.999) == doctest::Approx(0.75));

  CHECK_THROWS_AS(mcmc::coverage(reps, {1.0}, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(mcmc::coverage(reps, obs, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mcmc::coverage({}, {}, 0.9), std::invalid_argument);

  // against a continuous replicate distribution the hit rate matches the level
  Rng rng = make_rng(11, 3);
  std::vector<std::vector<double>> sets(1500, std::vector<double>(400));
  std::vector<double> draws(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (auto& v : sets[i]) v = rnorm(rng);
    draws[i] = rnorm(rng);
  }
  const double cov = mcmc::coverage(sets, draws, 0.8);
  CHECK(cov > 0.75);
  CHECK(cov < 0.85);
}
