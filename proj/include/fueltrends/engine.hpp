#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fueltrends/mcmc.hpp"
#include "fueltrends/model.hpp"

namespace fueltrends::engine {

// Per-fit switches. block_enabled may freeze a subset of parameter blocks at
// their starting values (null = sample everything); x_init overrides the
// default start; init_jitter perturbs only the sampled blocks, so each chain
// starts somewhere different while frozen blocks stay put.
struct FitOptions {
  Exec exec = Exec::serial;
  std::function<bool(const model::BlockSpec&)> block_enabled;
  std::vector<double> x_init;  // internal scale; empty = model default
  double init_jitter = 0.2;
};

struct FitResult {
  mcmc::PosteriorDraws draws;  // emitted scale, aligned with names
  std::vector<std::string> names;
  std::vector<model::EmitTransform> transforms;
  std::vector<int> sampled_blocks;        // model block indices that were sampled
  std::vector<double> block_acceptance;   // per sampled block, mean over chains
  double impute_acceptance = 0.0;         // post burn-in, mean over chains
};

FitResult fit_model(const model::Model& m, const mcmc::McmcConfig& config,
                    const FitOptions& options = {});

// Emitted draw back to sampler coordinates.
std::vector<double> to_internal(const model::Model& m, const std::vector<double>& emitted);

// One scored cell: a survey row's reported share of one node.
struct ReplicateCell {
  int row = 0;
  int node = 0;
  double observed = 0.0;
};

struct ReplicateSet {
  std::vector<ReplicateCell> cells;
  std::vector<std::vector<double>> shares;  // per cell, one share per used draw
};

// Posterior-predictive re-observation of every reported cell. draw_stride
// keeps every stride-th retained draw of each chain.
ReplicateSet posterior_replicates(const model::Model& m, const FitResult& fit,
                                  std::uint64_t seed, int draw_stride = 1,
                                  Exec exec = Exec::serial);

struct CoveragePanel {
  int node = 0;
  Area area = Area::urban;
  int n_cells = 0;
  double coverage = 0.0;
  double mean_observed = 0.0;
  double mean_replicate = 0.0;
};

struct CoverageReport {
  std::vector<CoveragePanel> panels;  // one per (node, area) with any cells
  int n_cells = 0;
  double overall = 0.0;
};

CoverageReport coverage_report(const model::Model& m, const ReplicateSet& reps, double level);

struct PredictRequest {
  std::string country;
  Area area = Area::overall;
  std::vector<double> years;
  double level = 0.95;
  bool survey_variability = false;  // add finite-sample replicate quantiles
  bool un_offsets_only = false;     // overall mixing from the anchor share alone
  long long N = 0;                  // replicate denominator; 0 = model config N
  int draw_stride = 1;
};

struct PredictRow {
  double year = 0.0;
  int node = 0;
  double lo = 0.0, median = 0.0, hi = 0.0;              // mean-trend quantiles
  double rep_lo = 0.0, rep_median = 0.0, rep_hi = 0.0;  // set when with_replicates
};

struct PredictTable {
  bool with_replicates = false;
  std::vector<PredictRow> rows;
};

// Quantiles of the per-node mean shares (and optionally of simulated survey
// shares) across retained draws. Years may extend past the fitted grid.
PredictTable predict(const model::Model& m, const FitResult& fit,
                     const data::UnUrbanSeries& urban, const PredictRequest& req,
                     std::uint64_t seed);

struct ForecastSpec {
  int cutoff_year = 0;
  int horizon = 0;  // score leads 1..horizon; 0 = everything past the cutoff
  double level = 0.95;
  int draw_stride = 1;
};

struct ForecastCell {
  std::string survey_id;
  std::string country;
  Area area = Area::urban;
  int node = 0;
  int year = 0;
  int lead = 0;
  double observed = 0.0;
  double rep_mean = 0.0;
  double lo = 0.0, hi = 0.0;
  bool inside = false;
};

struct ForecastReport {
  bool empty = false;  // no scorable held-out surveys
  std::vector<ForecastCell> cells;
  double coverage = 0.0;
  std::vector<std::pair<int, double>> median_width_by_lead;  // pooled, lead ascending
  int n_series = 0;             // (country, node, area) series with >= 2 leads
  int monotone_series = 0;      // those with non-decreasing width in lead
  int skipped_records = 0;      // held-out records with no trained country
  FitResult fit;                // the cutoff fit, for further reporting
};

// Fits on surveys at or before the cutoff over the full year grid, then
// scores the held-out urban/rural surveys against replicate intervals.
ForecastReport forecast_experiment(const model::ModelConfig& cfg,
                                   const std::vector<data::SurveyRecord>& kept,
                                   const data::UnUrbanSeries& urban,
                                   const data::RegionMap& regions,
                                   const mcmc::McmcConfig& mcfg, const FitOptions& options,
                                   const ForecastSpec& spec);

struct MonitoredParam {
  std::string name;
  double psrf = 1.0;
  double mean = 0.0;
  double lo = 0.0, median = 0.0, hi = 0.0;  // pooled central interval
};

struct MonitoredReport {
  std::vector<MonitoredParam> params;

  double frac_psrf_below(double threshold) const;
};

// Relative-mean trends at every grid year per (conditional, area, country)
// plus every dispersion, summarized from the emitted draws.
MonitoredReport monitored_report(const model::Model& m, const mcmc::PosteriorDraws& draws,
                                 double level = 0.95);

// Posterior mean outlier weight per survey, in survey-id order.
std::vector<std::pair<std::string, double>> rho_table(const model::Model& m,
                                                      const mcmc::PosteriorDraws& draws);

}  // namespace fueltrends::engine
