// Times the data-parallel kernels under both execution policies on a synthetic
// corpus and reports speedups. The openmp path must match the serial one bit
// for bit, so the comparison doubles as a cheap consistency check.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "fueltrends/data.hpp"
#include "fueltrends/engine.hpp"
#include "fueltrends/mcmc.hpp"
#include "fueltrends/model.hpp"
#include "fueltrends/rng.hpp"
#include "fueltrends/synth.hpp"

using namespace fueltrends;

namespace {

double seconds(std::chrono::steady_clock::time_point a,
               std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <class Fn>
double timed(Fn&& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  return seconds(t0, std::chrono::steady_clock::now());
}

}  // namespace

int main(int argc, char** argv) {
  int countries = argc > 1 ? std::atoi(argv[1]) : 6;
  int loglik_reps = argc > 2 ? std::atoi(argv[2]) : 200;

  synth::CorpusSpec spec;
  spec.n_countries = countries;
  Rng rng = make_rng(4242, 0);
  synth::Corpus corpus = synth::synthesize_corpus(spec, rng);
  auto sel = data::select_surveys(corpus.surveys);

  model::ModelConfig mcfg;
  for (int y = spec.year_lo; y <= spec.year_hi; ++y) mcfg.years.push_back(y);
  model::Model m(mcfg, sel.kept, corpus.truth.urban, corpus.truth.regions);
  std::printf("corpus: %d countries, %zu rows, %d parameters\n", countries, m.rows().size(),
              m.index().size());

  std::vector<double> x = m.initial_x();
  model::Counts counts = m.initial_counts();
  double ll_serial = 0.0, ll_openmp = 0.0;
  double t_serial = timed([&] {
    for (int r = 0; r < loglik_reps; ++r) ll_serial = m.corpus_loglik(x.data(), counts, Exec::serial);
  });
  double t_openmp = timed([&] {
    for (int r = 0; r < loglik_reps; ++r) ll_openmp = m.corpus_loglik(x.data(), counts, Exec::openmp);
  });
  std::printf("corpus_loglik x%d   serial %.3fs  openmp %.3fs  speedup %.2fx  %s\n",
              loglik_reps, t_serial, t_openmp, t_serial / t_openmp,
              ll_serial == ll_openmp ? "bit-equal" : "MISMATCH");
  if (ll_serial != ll_openmp) return 1;

  mcmc::McmcConfig fit_cfg;
  fit_cfg.chains = 2;
  fit_cfg.iterations = 60;
  fit_cfg.burn_in = 30;
  fit_cfg.thin = 1;
  fit_cfg.seed = 99;
  engine::FitOptions serial_opts, openmp_opts;
  serial_opts.exec = Exec::serial;
  openmp_opts.exec = Exec::openmp;
  engine::FitResult fit_s, fit_p;
  double tf_serial = timed([&] { fit_s = engine::fit_model(m, fit_cfg, serial_opts); });
  double tf_openmp = timed([&] { fit_p = engine::fit_model(m, fit_cfg, openmp_opts); });
  bool fit_equal = fit_s.draws.chains.size() == fit_p.draws.chains.size();
  for (size_t c = 0; fit_equal && c < fit_s.draws.chains.size(); ++c) {
    fit_equal = fit_s.draws.chains[c].draws == fit_p.draws.chains[c].draws;
  }
  std::printf("fit_model 2x60     serial %.3fs  openmp %.3fs  speedup %.2fx  %s\n", tf_serial,
              tf_openmp, tf_serial / tf_openmp, fit_equal ? "bit-equal" : "MISMATCH");
  if (!fit_equal) return 1;

  engine::ReplicateSet rep_s, rep_p;
  double tr_serial =
      timed([&] { rep_s = engine::posterior_replicates(m, fit_s, 7, 1, Exec::serial); });
  double tr_openmp =
      timed([&] { rep_p = engine::posterior_replicates(m, fit_s, 7, 1, Exec::openmp); });
  bool rep_equal = rep_s.shares == rep_p.shares;
  std::printf("replicates         serial %.3fs  openmp %.3fs  speedup %.2fx  %s\n", tr_serial,
              tr_openmp, tr_serial / tr_openmp, rep_equal ? "bit-equal" : "MISMATCH");
  return rep_equal ? 0 : 1;
}
