#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "fueltrends/data.hpp"
#include "fueltrends/engine.hpp"
#include "fueltrends/mcmc.hpp"
#include "fueltrends/model.hpp"
#include "fueltrends/parallel.hpp"
#include "fueltrends/rng.hpp"
#include "fueltrends/simexp.hpp"
#include "fueltrends/synth.hpp"

using namespace fueltrends;

namespace {

struct Setup {
  model::Model m;

  static Setup make() {
    synth::CorpusSpec spec;
    spec.n_countries = 3;
    spec.surveys_per_country = 4;
    spec.year_lo = 1996;
    spec.year_hi = 2005;
    spec.K = 5;
    Rng rng = make_rng(9100, 0);
    synth::Corpus corpus = synth::synthesize_corpus(spec, rng);
    auto sel = data::select_surveys(corpus.surveys);
    model::ModelConfig cfg;
    for (int y = spec.year_lo; y <= spec.year_hi; ++y) cfg.years.push_back(y);
    cfg.K = spec.K;
    return {model::Model(cfg, sel.kept, corpus.truth.urban, corpus.truth.regions)};
  }
};

}  // namespace

TEST_CASE("corpus log likelihood matches bit for bit across execution policies") {
  Setup s = Setup::make();
  std::vector<double> x = s.m.initial_x();
  model::Counts counts = s.m.initial_counts();
  CHECK(s.m.corpus_loglik(x.data(), counts, Exec::serial) ==
        s.m.corpus_loglik(x.data(), counts, Exec::openmp));

  // perturb and compare again so the check is not about one lucky point
  Rng rng = make_rng(9101, 0);
  for (double& xi : x) xi += 0.05 * rnorm(rng);
  CHECK(s.m.corpus_loglik(x.data(), counts, Exec::serial) ==
        s.m.corpus_loglik(x.data(), counts, Exec::openmp));
}

TEST_CASE("whole fits match bit for bit across execution policies") {
  Setup s = Setup::make();
  mcmc::McmcConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 60;
  cfg.burn_in = 30;
  cfg.thin = 2;
  cfg.seed = 9102;

  engine::FitOptions serial_opts, openmp_opts;
  serial_opts.exec = Exec::serial;
  openmp_opts.exec = Exec::openmp;
  engine::FitResult a = engine::fit_model(s.m, cfg, serial_opts);
  engine::FitResult b = engine::fit_model(s.m, cfg, openmp_opts);
  REQUIRE(a.draws.chains.size() == b.draws.chains.size());
  for (size_t c = 0; c < a.draws.chains.size(); ++c) {
    CHECK(a.draws.chains[c].draws == b.draws.chains[c].draws);
    CHECK(a.draws.chains[c].acceptance == b.draws.chains[c].acceptance);
  }
  CHECK(a.block_acceptance == b.block_acceptance);

  engine::ReplicateSet ra = engine::posterior_replicates(s.m, a, 9103, 1, Exec::serial);
  engine::ReplicateSet rb = engine::posterior_replicates(s.m, a, 9103, 1, Exec::openmp);
  CHECK(ra.shares == rb.shares);
  REQUIRE(ra.cells.size() == rb.cells.size());
  for (size_t i = 0; i < ra.cells.size(); ++i) {
    CHECK(ra.cells[i].observed == rb.cells[i].observed);
  }
}

TEST_CASE("the composition experiment matches bit for bit across execution policies") {
  synth::AppendixASpec spec;
  spec.n_countries = 4;
  Rng rng = make_rng(9104, 0);
  synth::AppendixAData data = synth::synthesize_appendix_a(spec, rng);

  simexp::ExperimentConfig cfg;
  cfg.n_grid = {10, 100};
  cfg.mcmc.iterations = 400;
  cfg.mcmc.burn_in = 200;
  cfg.mcmc.seed = 9105;

  cfg.exec = Exec::serial;
  simexp::ExperimentResult a = simexp::run_experiment(data, cfg);
  cfg.exec = Exec::openmp;
  simexp::ExperimentResult b = simexp::run_experiment(data, cfg);
  CHECK(a.baseline_sd == b.baseline_sd);
  CHECK(a.baseline_mse == b.baseline_mse);
  REQUIRE(a.by_n.size() == b.by_n.size());
  for (size_t i = 0; i < a.by_n.size(); ++i) {
    CHECK(a.by_n[i].sd_gap == b.by_n[i].sd_gap);
    CHECK(a.by_n[i].mse_gap == b.by_n[i].mse_gap);
    CHECK(a.by_n[i].median_sd_gap == b.by_n[i].median_sd_gap);
  }
  CHECK(a.quantile_r == b.quantile_r);
}

TEST_CASE("parallel_for covers every index exactly once under both policies") {
  for (Exec exec : {Exec::serial, Exec::openmp}) {
    std::vector<int> hits(257, 0);
    parallel_for(hits.size(), exec, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
  }
}
