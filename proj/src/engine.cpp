#include "fueltrends/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <tuple>

#include "fueltrends/special.hpp"

namespace fueltrends::engine {

namespace {

// latent counts and the adaptive transfer-step state of one chain
struct ImputeState {
  model::Counts counts;
  std::vector<double> lg;  // log(geometric mean step - 1) per group
  std::vector<long long> batch;
  std::vector<long long> post;
  long long sweeps = 0;
  long long post_sweeps = 0;
};

std::vector<double> sorted_copy(const std::vector<double>& v) {
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  return s;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

}  // namespace

FitResult fit_model(const model::Model& m, const mcmc::McmcConfig& config,
                    const FitOptions& options) {
  config.validate();
  const auto& blocks = m.blocks();
  std::vector<int> sampled;
  for (int b = 0; b < static_cast<int>(blocks.size()); ++b)
    if (!options.block_enabled || options.block_enabled(blocks[b])) sampled.push_back(b);

  std::vector<double> x0 = options.x_init.empty() ? m.initial_x() : options.x_init;
  if (static_cast<int>(x0.size()) != m.index().size())
    throw std::invalid_argument("fit: x_init has the wrong length");

  std::vector<int> jittered;
  for (int b : sampled)
    for (int k : blocks[b].xs) jittered.push_back(k);

  const int n_groups = static_cast<int>(m.impute_groups().size());
  std::vector<std::shared_ptr<ImputeState>> states(config.chains);
  for (auto& s : states) {
    s = std::make_shared<ImputeState>();
    s->counts = m.initial_counts();
    s->lg.assign(n_groups, 0.0);
    s->batch.assign(n_groups, 0);
    s->post.assign(n_groups, 0);
  }

  const double jitter = options.init_jitter;
  const mcmc::AdaptationConfig adapt = config.adaptation;

  auto factory = [&m, &blocks, &states, sampled, x0, jittered, jitter,
                  adapt](int chain) {
    auto st = states[chain];
    mcmc::GibbsProgram p;
    p.n = m.index().size();
    for (int b : sampled) p.blocks.push_back({blocks[b].xs, blocks[b].vector_block});
    p.block_logdens = [&m, st, sampled](int k, const double* x) {
      return m.block_logdens(sampled[k], x, st->counts);
    };
    p.full_logdens = [&m, st](const double* x) { return m.log_posterior(x, st->counts); };
    p.init = [x0, jittered, jitter](std::vector<double>& x, Rng& rng) {
      x = x0;
      for (int k : jittered) x[k] += jitter * rnorm(rng);
    };
    p.custom_sweep = [&m, st, adapt](const double* x, Rng& rng, bool adapting) {
      ++st->sweeps;
      if (!adapting) ++st->post_sweeps;
      const int G = static_cast<int>(st->lg.size());
      for (int g = 0; g < G; ++g)
        for (int rep = 0; rep < 2; ++rep) {
          const bool acc =
              m.imputation_move(g, x, st->counts, 1.0 + std::exp(st->lg[g]), rng);
          if (adapting)
            st->batch[g] += acc ? 1 : 0;
          else
            st->post[g] += acc ? 1 : 0;
        }
      if (adapting && st->sweeps % adapt.interval == 0) {
        const double batch_idx = static_cast<double>(st->sweeps / adapt.interval);
        const double delta = std::min(0.1, 1.0 / std::sqrt(batch_idx));
        for (int g = 0; g < G; ++g) {
          const double rate =
              static_cast<double>(st->batch[g]) / (2.0 * adapt.interval);
          st->lg[g] += rate > adapt.target_scalar ? delta : -delta;
          st->batch[g] = 0;
        }
      }
    };
    p.emit = [&m](const std::vector<double>& x, std::vector<double>& out) { m.emit(x, out); };
    return p;
  };

  FitResult out;
  out.draws = mcmc::run_chains(factory, config, options.exec);
  out.names = m.param_names();
  out.transforms = m.emit_transforms();
  out.sampled_blocks = sampled;
  out.block_acceptance.assign(sampled.size(), 0.0);
  for (const auto& ch : out.draws.chains)
    for (std::size_t b = 0; b < sampled.size(); ++b) out.block_acceptance[b] += ch.acceptance[b];
  for (auto& a : out.block_acceptance) a /= static_cast<double>(config.chains);

  double accepted = 0.0;
  long long proposed = 0;
  for (const auto& st : states) {
    for (long long p : st->post) accepted += static_cast<double>(p);
    proposed += st->post_sweeps * 2 * n_groups;
  }
  out.impute_acceptance = proposed > 0 ? accepted / static_cast<double>(proposed) : 0.0;
  return out;
}

std::vector<double> to_internal(const model::Model& m, const std::vector<double>& emitted) {
  const auto& tr = m.emit_transforms();
  if (emitted.size() != tr.size())
    throw std::invalid_argument("to_internal: wrong draw length");
  std::vector<double> x(emitted.size());
  for (std::size_t k = 0; k < emitted.size(); ++k) {
    switch (tr[k]) {
      case model::EmitTransform::identity:
        x[k] = emitted[k];
        break;
      case model::EmitTransform::exp_:
        x[k] = std::log(emitted[k]);
        break;
      case model::EmitTransform::logistic_:
        x[k] = logit(emitted[k]);
        break;
    }
  }
  return x;
}

namespace {

std::vector<std::pair<int, int>> strided_draws(const mcmc::PosteriorDraws& draws, int stride) {
  if (stride < 1) throw std::invalid_argument("draw_stride must be >= 1");
  std::vector<std::pair<int, int>> use;
  for (int c = 0; c < static_cast<int>(draws.chains.size()); ++c)
    for (int d = 0; d < static_cast<int>(draws.chains[c].draws.size()); d += stride)
      use.push_back({c, d});
  if (use.empty()) throw std::invalid_argument("no retained draws to use");
  return use;
}

}  // namespace

ReplicateSet posterior_replicates(const model::Model& m, const FitResult& fit,
                                  std::uint64_t seed, int draw_stride, Exec exec) {
  const auto& rows = m.rows();
  ReplicateSet out;
  std::vector<std::vector<int>> cells_of_row(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int n = 0; n < kNumNodes; ++n)
      if (rows[r].reported[n]) {
        cells_of_row[r].push_back(static_cast<int>(out.cells.size()));
        out.cells.push_back({static_cast<int>(r), n,
                             static_cast<double>(rows[r].layout.v[n]) /
                                 static_cast<double>(rows[r].layout.N)});
      }

  const auto use = strided_draws(fit.draws, draw_stride);
  out.shares.assign(out.cells.size(), std::vector<double>(use.size(), 0.0));
  parallel_for(use.size(), exec, [&](std::size_t u) {
    const auto [c, d] = use[u];
    const std::vector<double> x = to_internal(m, fit.draws.chains[c].draws[d]);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(d)));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto sim = m.simulate_counts(x.data(), static_cast<int>(r), rng);
      for (int cell : cells_of_row[r])
        out.shares[cell][u] = static_cast<double>(sim[out.cells[cell].node]) /
                              static_cast<double>(rows[r].layout.N);
    }
  });
  return out;
}

CoverageReport coverage_report(const model::Model& m, const ReplicateSet& reps, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("coverage_report: level must lie in (0, 1)");
  if (reps.cells.empty()) throw std::invalid_argument("coverage_report: no cells");
  const double tail = (1.0 - level) / 2.0;

  std::map<std::pair<int, int>, std::vector<int>> panels;  // (node, area) -> cells
  for (std::size_t k = 0; k < reps.cells.size(); ++k) {
    const auto& cell = reps.cells[k];
    const Area area = m.rows()[cell.row].area;
    panels[{cell.node, static_cast<int>(area)}].push_back(static_cast<int>(k));
  }

  CoverageReport report;
  report.n_cells = static_cast<int>(reps.cells.size());
  int inside_all = 0;
  for (const auto& [key, members] : panels) {
    CoveragePanel panel;
    panel.node = key.first;
    panel.area = static_cast<Area>(key.second);
    panel.n_cells = static_cast<int>(members.size());
    int inside = 0;
    for (int k : members) {
      const auto s = sorted_copy(reps.shares[k]);
      const double lo = quantile_sorted(s, tail);
      const double hi = quantile_sorted(s, 1.0 - tail);
      const double obs = reps.cells[k].observed;
      if (obs >= lo && obs <= hi) ++inside;
      panel.mean_observed += obs;
      double rep_mean = 0.0;
      for (double v : s) rep_mean += v;
      panel.mean_replicate += rep_mean / static_cast<double>(s.size());
    }
    panel.coverage = static_cast<double>(inside) / panel.n_cells;
    panel.mean_observed /= panel.n_cells;
    panel.mean_replicate /= panel.n_cells;
    inside_all += inside;
    report.panels.push_back(panel);
  }
  report.overall = static_cast<double>(inside_all) / report.n_cells;
  return report;
}

PredictTable predict(const model::Model& m, const FitResult& fit,
                     const data::UnUrbanSeries& urban, const PredictRequest& req,
                     std::uint64_t seed) {
  if (req.years.empty()) throw std::invalid_argument("predict: no years requested");
  if (!(req.level > 0.0 && req.level < 1.0))
    throw std::invalid_argument("predict: level must lie in (0, 1)");
  const int c = m.country_index(req.country);
  const long long N = req.N > 0 ? req.N : m.config().N;
  const auto use = strided_draws(fit.draws, req.draw_stride);
  const double tail = (1.0 - req.level) / 2.0;

  const std::size_t ny = req.years.size();
  std::vector<std::vector<std::vector<double>>> trend(
      ny, std::vector<std::vector<double>>(kNumNodes));
  std::vector<std::vector<std::vector<double>>> reps;
  if (req.survey_variability)
    reps.assign(ny, std::vector<std::vector<double>>(kNumNodes));

  for (std::size_t u = 0; u < use.size(); ++u) {
    const auto [ch, d] = use[u];
    const std::vector<double> x = to_internal(m, fit.draws.chains[ch].draws[d]);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(ch), static_cast<std::uint64_t>(d)));
    for (std::size_t y = 0; y < ny; ++y) {
      const double year = req.years[y];
      const double logit_P = logit(urban.value(req.country, year));
      const auto mu =
          m.node_means_year(x.data(), req.area, c, year, logit_P, req.un_offsets_only);
      for (int n = 0; n < kNumNodes; ++n) trend[y][n].push_back(mu[n]);
      if (req.survey_variability) {
        const auto sim = m.simulate_counts_year(x.data(), req.area, c, year, logit_P, N, rng,
                                                req.un_offsets_only);
        for (int n = 0; n < kNumNodes; ++n)
          reps[y][n].push_back(static_cast<double>(sim[n]) / static_cast<double>(N));
      }
    }
  }

  PredictTable table;
  table.with_replicates = req.survey_variability;
  for (std::size_t y = 0; y < ny; ++y)
    for (int n = 0; n < kNumNodes; ++n) {
      PredictRow row;
      row.year = req.years[y];
      row.node = n;
      auto s = sorted_copy(trend[y][n]);
      row.lo = quantile_sorted(s, tail);
      row.median = quantile_sorted(s, 0.5);
      row.hi = quantile_sorted(s, 1.0 - tail);
      if (req.survey_variability) {
        auto rs = sorted_copy(reps[y][n]);
        row.rep_lo = quantile_sorted(rs, tail);
        row.rep_median = quantile_sorted(rs, 0.5);
        row.rep_hi = quantile_sorted(rs, 1.0 - tail);
      }
      table.rows.push_back(row);
    }
  return table;
}

ForecastReport forecast_experiment(const model::ModelConfig& cfg,
                                   const std::vector<data::SurveyRecord>& kept,
                                   const data::UnUrbanSeries& urban,
                                   const data::RegionMap& regions,
                                   const mcmc::McmcConfig& mcfg, const FitOptions& options,
                                   const ForecastSpec& spec) {
  std::vector<data::SurveyRecord> train;
  std::vector<data::SurveyRecord> held;
  for (const auto& rec : kept) {
    if (rec.year <= spec.cutoff_year) {
      train.push_back(rec);
    } else if (spec.horizon <= 0 || rec.year <= spec.cutoff_year + spec.horizon) {
      held.push_back(rec);
    }
  }
  if (train.empty())
    throw std::runtime_error("forecast: no surveys at or before the cutoff year");

  model::Model trained(cfg, train, urban, regions);
  ForecastReport report;
  report.fit = fit_model(trained, mcfg, options);

  const std::set<std::string> trained_countries(trained.countries().begin(),
                                                trained.countries().end());
  struct Scored {
    const data::SurveyRecord* rec;
    data::ObservationCounts layout;
    int country = 0;
    int year_idx = 0;
    double logit_P = 0.0;
    std::vector<int> nodes;
  };
  std::vector<Scored> scorable;
  for (const auto& rec : held) {
    if (rec.area == Area::overall) continue;  // out-of-sample checks target the area surveys
    if (!trained_countries.count(rec.country)) {
      ++report.skipped_records;
      continue;
    }
    Scored s;
    s.rec = &rec;
    s.layout = data::to_counts(rec, cfg.N);
    s.country = trained.country_index(rec.country);
    s.year_idx = trained.basis().row_of_year(rec.year);
    if (s.year_idx < 0)
      throw std::runtime_error("forecast: held-out year off the fitted grid");
    s.logit_P = logit(urban.value(rec.country, rec.year));
    for (int n = 0; n < kNumNodes; ++n)
      if (rec.prop[n].has_value()) s.nodes.push_back(n);
    if (!s.nodes.empty()) scorable.push_back(std::move(s));
  }
  if (scorable.empty()) {
    report.empty = true;
    return report;
  }

  const auto use = strided_draws(report.fit.draws, spec.draw_stride);
  std::vector<std::vector<std::vector<double>>> shares(scorable.size());
  for (std::size_t k = 0; k < scorable.size(); ++k)
    shares[k].assign(scorable[k].nodes.size(), std::vector<double>(use.size(), 0.0));

  const std::uint64_t rep_seed = derive_seed(mcfg.seed, 0xFC17);
  parallel_for(use.size(), options.exec, [&](std::size_t u) {
    const auto [c, d] = use[u];
    const std::vector<double> x = to_internal(trained, report.fit.draws.chains[c].draws[d]);
    Rng rng(derive_seed(rep_seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(d)));
    for (std::size_t k = 0; k < scorable.size(); ++k) {
      const auto& s = scorable[k];
      const auto sim = trained.simulate_counts_at(x.data(), s.rec->area, s.country, s.year_idx,
                                                  s.logit_P, cfg.N, rng);
      for (std::size_t q = 0; q < s.nodes.size(); ++q)
        shares[k][q][u] =
            static_cast<double>(sim[s.nodes[q]]) / static_cast<double>(cfg.N);
    }
  });

  const double tail = (1.0 - spec.level) / 2.0;
  std::map<int, std::vector<double>> widths_by_lead;
  std::map<std::tuple<std::string, int, int>, std::map<int, std::vector<double>>> series;
  int inside_all = 0;
  for (std::size_t k = 0; k < scorable.size(); ++k) {
    const auto& s = scorable[k];
    for (std::size_t q = 0; q < s.nodes.size(); ++q) {
      ForecastCell cell;
      cell.survey_id = s.rec->survey_id;
      cell.country = s.rec->country;
      cell.area = s.rec->area;
      cell.node = s.nodes[q];
      cell.year = s.rec->year;
      cell.lead = s.rec->year - spec.cutoff_year;
      cell.observed = static_cast<double>(s.layout.v[s.nodes[q]]) /
                      static_cast<double>(s.layout.N);
      const auto sorted = sorted_copy(shares[k][q]);
      cell.lo = quantile_sorted(sorted, tail);
      cell.hi = quantile_sorted(sorted, 1.0 - tail);
      double mean = 0.0;
      for (double v : sorted) mean += v;
      cell.rep_mean = mean / static_cast<double>(sorted.size());
      cell.inside = cell.observed >= cell.lo && cell.observed <= cell.hi;
      inside_all += cell.inside ? 1 : 0;
      widths_by_lead[cell.lead].push_back(cell.hi - cell.lo);
      series[{cell.country, cell.node, static_cast<int>(cell.area)}][cell.lead].push_back(
          cell.hi - cell.lo);
      report.cells.push_back(std::move(cell));
    }
  }
  report.coverage = static_cast<double>(inside_all) / static_cast<double>(report.cells.size());
  for (const auto& [lead, widths] : widths_by_lead)
    report.median_width_by_lead.push_back({lead, median_of(widths)});
  for (const auto& [key, leads] : series) {
    if (leads.size() < 2) continue;
    ++report.n_series;
    bool monotone = true;
    double prev = -1.0;
    for (const auto& [lead, widths] : leads) {
      const double w = median_of(widths);
      if (w + 1e-12 < prev) monotone = false;
      prev = w;
    }
    report.monotone_series += monotone ? 1 : 0;
  }
  return report;
}

double MonitoredReport::frac_psrf_below(double threshold) const {
  if (params.empty()) return 0.0;
  int n = 0;
  for (const auto& p : params) n += p.psrf < threshold ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(params.size());
}

MonitoredReport monitored_report(const model::Model& m, const mcmc::PosteriorDraws& draws,
                                 double level) {
  if (draws.chains.size() < 2)
    throw std::invalid_argument("monitored_report: needs at least two chains");
  const int n_chains = static_cast<int>(draws.chains.size());
  const int n_draws = draws.draws_per_chain();
  if (n_draws < 2) throw std::invalid_argument("monitored_report: needs at least two draws");
  const double tail = (1.0 - level) / 2.0;

  const auto& hier = FuelHierarchy::standard();
  const auto& idx = m.index();
  const auto& years = m.config().years;
  const int T = static_cast<int>(years.size());
  const int nc = idx.n_country();

  MonitoredReport report;
  auto summarize = [&](std::string name, const std::vector<std::vector<double>>& traces) {
    MonitoredParam p;
    p.name = std::move(name);
    p.psrf = mcmc::psrf(traces);
    std::vector<double> pooled;
    pooled.reserve(static_cast<std::size_t>(n_chains) * n_draws);
    for (const auto& t : traces) pooled.insert(pooled.end(), t.begin(), t.end());
    for (double v : pooled) p.mean += v;
    p.mean /= static_cast<double>(pooled.size());
    std::sort(pooled.begin(), pooled.end());
    p.lo = quantile_sorted(pooled, tail);
    p.median = quantile_sorted(pooled, 0.5);
    p.hi = quantile_sorted(pooled, 1.0 - tail);
    report.params.push_back(std::move(p));
  };

  // the trend coefficients are emitted untransformed, so the draws can feed
  // the trend evaluators directly
  std::vector<std::vector<std::vector<double>>> traces(
      T, std::vector<std::vector<double>>(n_chains, std::vector<double>(n_draws)));
  for (int i = 0; i < kNumConditionals; ++i)
    for (int j = 0; j < 2; ++j)
      for (int c = 0; c < nc; ++c) {
        for (int ch = 0; ch < n_chains; ++ch)
          for (int d = 0; d < n_draws; ++d) {
            const double* x = draws.chains[ch].draws[d].data();
            for (int t = 0; t < T; ++t)
              traces[t][ch][d] = logistic(m.f_value(x, i, j, c, t));
          }
        const std::string stem = std::string("nu[") + node_name(hier.conditionals[i]) + "," +
                                 (j == 0 ? "urban" : "rural") + "," + m.countries()[c] + ",";
        for (int t = 0; t < T; ++t) summarize(stem + std::to_string(years[t]) + "]", traces[t]);
      }

  std::vector<std::vector<double>> phi_traces(n_chains, std::vector<double>(n_draws));
  for (int i = 0; i < kNumConditionals; ++i)
    for (int j = 0; j < 2; ++j)
      for (int c = 0; c < nc; ++c) {
        const int k = idx.logphi(i, j, c);
        for (int ch = 0; ch < n_chains; ++ch)
          for (int d = 0; d < n_draws; ++d) phi_traces[ch][d] = draws.chains[ch].draws[d][k];
        summarize(m.param_names()[k], phi_traces);
      }
  return report;
}

std::vector<std::pair<std::string, double>> rho_table(const model::Model& m,
                                                      const mcmc::PosteriorDraws& draws) {
  const auto& idx = m.index();
  std::vector<std::pair<std::string, double>> table;
  for (int s = 0; s < idx.n_survey(); ++s) {
    const int k = idx.logit_rho(s);
    double mean = 0.0;
    long long n = 0;
    for (const auto& ch : draws.chains)
      for (const auto& d : ch.draws) {
        mean += d[k];
        ++n;
      }
    table.push_back({m.survey_ids()[s], n > 0 ? mean / static_cast<double>(n) : 0.0});
  }
  return table;
}

}  // namespace fueltrends::engine
