#pragma once

#include <string>
#include <vector>

#include "fueltrends/data.hpp"
#include "fueltrends/hierarchy.hpp"
#include "fueltrends/rng.hpp"
#include "fueltrends/splines.hpp"

namespace fueltrends::synth {

// Knobs for the synthetic survey corpus. Defaults give a desk-sized problem:
// six countries over two regions and 28 grid years, a dozen surveys each.
struct CorpusSpec {
  int n_countries = 6;
  int n_regions = 2;
  int n_supers = 2;
  int year_lo = 1990;
  int year_hi = 2017;
  int K = 10;
  long long N = 100000;  // denominator used when sampling survey counts
  int surveys_per_country = 12;
  double outlier_fraction = 0.02;  // share of surveys regenerated as junk
  bool zero_survey_variability = false;  // binomial sticks at the exact trend
  bool with_exclusions = false;  // append three records the selection rules drop
};

// Everything the generator knows, kept so fits can be scored against it.
// Coefficient vectors have length K+1 (intercept, linear, K-1 non-linear)
// and are indexed by (i * 2 + j) * n_countries + c like the model layout.
struct CorpusTruth {
  std::vector<int> years;
  int K = 0;
  long long N = 0;
  std::vector<std::string> countries;
  data::UnUrbanSeries urban;
  data::RegionMap regions;
  splines::SplineBasis basis;
  std::vector<std::vector<double>> beta;
  std::vector<double> log_phi;             // same (i, j, c) indexing as beta
  std::vector<std::vector<double>> kappa;  // per country
  std::vector<std::string> outlier_surveys;  // ids regenerated without a trend

  // conditional mean of stick i for area j (0 urban, 1 rural) in country c
  double nu_value(int i, int j, int c, double year) const;
  // urban mixing weight: anchor share warped by the country offset trend
  double pi_value(int c, double year) const;
};

struct Corpus {
  std::vector<data::SurveyRecord> surveys;
  CorpusTruth truth;
};

// Draws smooth country trends around region and super-region means, then
// samples tiered survey counts along them. Survey s of each country keeps
// reporting pattern s mod 6: two full urban/rural pairs (the second with 4%
// non-response), one pair missing the lower tier, one top-only pair, one
// overall-only row, and one pair missing the wood and crop-waste cells.
Corpus synthesize_corpus(const CorpusSpec& spec, Rng& rng);

// Single-composition benchmark data: per-country truth compositions with a
// common dispersion and a few surveys of log-uniform real size each.
struct AppendixASpec {
  int n_countries = 50;
  int k = 4;  // composition categories
  int surveys_per_country = 3;
  long long size_lo = 1000;
  long long size_hi = 100000;
  // real survey sizes, consumed in order; when set they replace the
  // log-uniform draws and determine the number of countries
  std::vector<long long> sizes;
};

struct AppendixACountry {
  std::vector<double> nu;  // k-1 relative means
  std::vector<double> mu;  // k marginal category means
  double phi = 0.0;
  std::vector<long long> sizes;
  std::vector<std::vector<long long>> counts;  // one k-cell row per survey
};

struct AppendixAData {
  int k = 0;
  std::vector<AppendixACountry> countries;
};

AppendixAData synthesize_appendix_a(const AppendixASpec& spec, Rng& rng);

}  // namespace fueltrends::synth
