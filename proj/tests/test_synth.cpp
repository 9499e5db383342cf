#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fueltrends/data.hpp"
#include "fueltrends/distributions.hpp"
#include "fueltrends/rng.hpp"
#include "fueltrends/special.hpp"
#include "fueltrends/synth.hpp"

using namespace fueltrends;
namespace fs = fueltrends::synth;

namespace {

int idx(Node n) { return static_cast<int>(n); }

bool same_record(const data::SurveyRecord& a, const data::SurveyRecord& b) {
  if (a.survey_id != b.survey_id || a.country != b.country || a.year != b.year ||
      a.area != b.area || a.nonresponse != b.nonresponse ||
      a.respondent_total != b.respondent_total || a.flags != b.flags) {
    return false;
  }
  for (int n = 0; n < kNumNodes; ++n) {
    if (a.prop[n].has_value() != b.prop[n].has_value()) return false;
    if (a.prop[n] && *a.prop[n] != *b.prop[n]) return false;
  }
  return true;
}

// absolute node shares implied by the truth sticks for one (area, country, year)
std::array<double, kNumNodes> truth_abs(const fs::CorpusTruth& tr, int j, int c, int year) {
  std::array<double, kNumNodes> a{};
  double nu[kNumConditionals];
  for (int i = 0; i < kNumConditionals; ++i) nu[i] = tr.nu_value(i, j, c, year);
  a[idx(Node::solid)] = nu[0];
  a[idx(Node::kerosene)] = nu[1] * (1 - nu[0]);
  a[idx(Node::gas)] = nu[2] * (1 - nu[0]) * (1 - nu[1]);
  a[idx(Node::electricity)] = nu[3] * (1 - nu[0]) * (1 - nu[1]) * (1 - nu[2]);
  a[idx(Node::others)] = (1 - nu[0]) * (1 - nu[1]) * (1 - nu[2]) * (1 - nu[3]);
  a[idx(Node::biomass)] = nu[4] * a[idx(Node::solid)];
  a[idx(Node::charcoal)] = nu[5] * (1 - nu[4]) * a[idx(Node::solid)];
  a[idx(Node::coal)] = (1 - nu[4]) * (1 - nu[5]) * a[idx(Node::solid)];
  a[idx(Node::wood)] = nu[6] * a[idx(Node::biomass)];
  a[idx(Node::cropwaste)] = nu[7] * (1 - nu[6]) * a[idx(Node::biomass)];
  a[idx(Node::dung)] = (1 - nu[6]) * (1 - nu[7]) * a[idx(Node::biomass)];
  return a;
}

int pattern_of(const std::string& survey_id) {
  auto pos = survey_id.rfind('-');
  return std::stoi(survey_id.substr(pos + 1)) % 6;
}

}  // namespace

TEST_CASE("corpus shape, determinism, and truth bookkeeping") {
  fs::CorpusSpec spec;
  Rng rng = make_rng(7001, 0);
  fs::Corpus corpus = fs::synthesize_corpus(spec, rng);
  const auto& tr = corpus.truth;

  CHECK(tr.countries.size() == 6);
  CHECK(tr.years.size() == 28);
  CHECK(tr.years.front() == 1990);
  CHECK(tr.years.back() == 2017);
  CHECK(tr.beta.size() == kNumConditionals * 2 * 6);
  CHECK(tr.log_phi.size() == kNumConditionals * 2 * 6);
  CHECK(tr.kappa.size() == 6);
  for (const auto& b : tr.beta) CHECK(b.size() == spec.K + 1);
  for (const auto& k : tr.kappa) CHECK(k.size() == spec.K + 1);

  // 12 surveys/country: two of each pattern, overall-only rows count once
  CHECK(corpus.surveys.size() == 6 * 22);

  std::set<std::string> ids;
  for (const auto& rec : corpus.surveys) {
    ids.insert(rec.survey_id);
    CHECK(rec.respondent_total == spec.N);
    CHECK(rec.year >= spec.year_lo);
    CHECK(rec.year <= spec.year_hi);
    CHECK(std::find(tr.countries.begin(), tr.countries.end(), rec.country) !=
          tr.countries.end());
    double nr = rec.nonresponse;
    CHECK((nr == 0.0 || nr == 0.04));
    for (int n = 0; n < kNumNodes; ++n) {
      if (!rec.prop[n]) continue;
      CHECK(*rec.prop[n] >= 0.0);
      CHECK(*rec.prop[n] <= 1.0);
    }
  }
  CHECK(ids.size() == 72);

  // default 2% of 72 surveys rounds to one junk survey
  REQUIRE(tr.outlier_surveys.size() == 1);
  CHECK(ids.count(tr.outlier_surveys[0]) == 1);

  // reporting pattern follows the survey slot
  std::map<std::string, std::vector<const data::SurveyRecord*>> by_id;
  for (const auto& rec : corpus.surveys) by_id[rec.survey_id].push_back(&rec);
  for (const auto& [id, rows] : by_id) {
    int pattern = pattern_of(id);
    if (pattern == 4) {
      REQUIRE(rows.size() == 1);
      CHECK(rows[0]->area == Area::overall);
      continue;
    }
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]->area == Area::urban);
    CHECK(rows[1]->area == Area::rural);
    for (const auto* rec : rows) {
      int n_reported = 0;
      for (int n = 0; n < kNumNodes; ++n) n_reported += rec->prop[n].has_value();
      switch (pattern) {
        case 2: CHECK(n_reported == 8); CHECK(!rec->prop[idx(Node::dung)]); break;
        case 3: CHECK(n_reported == 5); CHECK(rec->prop[idx(Node::others)]); break;
        case 5:
          CHECK(n_reported == 9);
          CHECK(rec->prop[idx(Node::dung)]);
          CHECK(!rec->prop[idx(Node::wood)]);
          break;
        default: CHECK(n_reported == kNumNodes); break;
      }
      CHECK((rec->nonresponse > 0.0) == (pattern == 1));
    }
  }

  Rng rng_b = make_rng(7001, 0);
  fs::Corpus again = fs::synthesize_corpus(spec, rng_b);
  REQUIRE(again.surveys.size() == corpus.surveys.size());
  for (size_t i = 0; i < corpus.surveys.size(); ++i) {
    CHECK(same_record(corpus.surveys[i], again.surveys[i]));
  }
  CHECK(again.truth.outlier_surveys == tr.outlier_surveys);
  CHECK(again.truth.beta[17] == tr.beta[17]);

  Rng rng_c = make_rng(7002, 0);
  fs::Corpus other = fs::synthesize_corpus(spec, rng_c);
  bool any_diff = false;
  for (size_t i = 0; i < corpus.surveys.size(); ++i) {
    if (!same_record(corpus.surveys[i], other.surveys[i])) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("generated rows are tier-consistent and round-trip to exact counts") {
  fs::CorpusSpec spec;
  Rng rng = make_rng(7100, 0);
  fs::Corpus corpus = fs::synthesize_corpus(spec, rng);

  for (const auto& rec : corpus.surveys) {
    double scale = 1.0 - rec.nonresponse;
    // parents equal the sum of their children when all are reported
    if (rec.prop[idx(Node::biomass)] && rec.prop[idx(Node::charcoal)]) {
      double kids = *rec.prop[idx(Node::biomass)] + *rec.prop[idx(Node::charcoal)] +
                    *rec.prop[idx(Node::coal)];
      CHECK(*rec.prop[idx(Node::solid)] == doctest::Approx(kids).epsilon(1e-9));
    }
    if (rec.prop[idx(Node::wood)]) {
      double kids = *rec.prop[idx(Node::wood)] + *rec.prop[idx(Node::cropwaste)] +
                    *rec.prop[idx(Node::dung)];
      CHECK(*rec.prop[idx(Node::biomass)] == doctest::Approx(kids).epsilon(1e-9));
    }
    double top = *rec.prop[idx(Node::solid)] + *rec.prop[idx(Node::kerosene)] +
                 *rec.prop[idx(Node::gas)] + *rec.prop[idx(Node::electricity)] +
                 *rec.prop[idx(Node::others)];
    CHECK(top == doctest::Approx(scale).epsilon(1e-9));

    // the count layout recovers the sampled integers exactly
    data::ObservationCounts layout = data::to_counts(rec, spec.N);
    for (int n = 0; n < kNumNodes; ++n) {
      if (!rec.prop[n]) continue;
      long long want = std::llround(*rec.prop[n] / scale * static_cast<double>(spec.N));
      CHECK(layout.v[n] == want);
    }
    long long top_sum = 0;
    for (Node n : {Node::solid, Node::kerosene, Node::gas, Node::electricity, Node::others}) {
      top_sum += layout.v[idx(n)];
    }
    CHECK(top_sum == spec.N);
  }
}

TEST_CASE("zero survey variability pins rows to the truth trend") {
  fs::CorpusSpec spec;
  spec.zero_survey_variability = true;
  spec.outlier_fraction = 0.0;
  Rng rng = make_rng(7200, 0);
  fs::Corpus corpus = fs::synthesize_corpus(spec, rng);
  const auto& tr = corpus.truth;

  int checked = 0;
  for (const auto& rec : corpus.surveys) {
    if (rec.area == Area::overall || !rec.prop[idx(Node::wood)]) continue;
    int c = static_cast<int>(std::find(tr.countries.begin(), tr.countries.end(), rec.country) -
                             tr.countries.begin());
    int j = rec.area == Area::urban ? 0 : 1;
    auto want = truth_abs(tr, j, c, rec.year);
    double scale = 1.0 - rec.nonresponse;
    for (int n = 0; n < kNumNodes; ++n) {
      // binomial noise at N = 1e5 stays well inside 0.02; the overdispersed
      // sampler would not
      CHECK(std::fabs(*rec.prop[n] / scale - want[n]) < 0.02);
    }
    ++checked;
  }
  CHECK(checked == 48);  // patterns 0 and 1: four surveys per country, two rows each
}

TEST_CASE("junk surveys stray far from the trend") {
  fs::CorpusSpec spec;
  spec.n_countries = 2;
  spec.n_regions = 2;
  spec.surveys_per_country = 4;
  spec.outlier_fraction = 0.5;
  Rng rng = make_rng(7300, 0);
  fs::Corpus corpus = fs::synthesize_corpus(spec, rng);
  const auto& tr = corpus.truth;
  REQUIRE(tr.outlier_surveys.size() == 4);
  REQUIRE(std::set<std::string>(tr.outlier_surveys.begin(), tr.outlier_surveys.end()).size() ==
          4);

  for (const auto& id : tr.outlier_surveys) {
    double worst = 0.0;
    for (const auto& rec : corpus.surveys) {
      if (rec.survey_id != id || rec.area == Area::overall) continue;
      int c = static_cast<int>(std::find(tr.countries.begin(), tr.countries.end(),
                                         rec.country) -
                               tr.countries.begin());
      auto want = truth_abs(tr, rec.area == Area::urban ? 0 : 1, c, rec.year);
      for (int n = 0; n < kNumNodes; ++n) {
        if (rec.prop[n]) worst = std::max(worst, std::fabs(*rec.prop[n] - want[n]));
      }
    }
    CHECK(worst > 0.05);
  }
}

TEST_CASE("exclusion extras trip each selection rule once") {
  fs::CorpusSpec spec;
  spec.with_exclusions = true;
  Rng rng = make_rng(7400, 0);
  fs::Corpus corpus = fs::synthesize_corpus(spec, rng);

  data::Selection sel = data::select_surveys(corpus.surveys);
  REQUIRE(sel.excluded.size() == 3);
  CHECK(sel.excluded[0].rule == "a");
  CHECK(sel.excluded[1].rule == "b");
  CHECK(sel.excluded[2].rule == "c");
  CHECK(sel.kept.size() == corpus.surveys.size() - 3);
  for (const auto& rec : sel.kept) {
    CHECK(rec.survey_id.find("-excl-") == std::string::npos);
  }
}

TEST_CASE("corpus spec validation") {
  Rng rng = make_rng(7500, 0);
  fs::CorpusSpec spec;
  spec.n_countries = 0;
  CHECK_THROWS_AS(fs::synthesize_corpus(spec, rng), std::invalid_argument);
  spec = {};
  spec.year_hi = spec.year_lo + 3;  // grid shorter than the basis
  CHECK_THROWS_AS(fs::synthesize_corpus(spec, rng), std::invalid_argument);
  spec = {};
  spec.outlier_fraction = 1.5;
  CHECK_THROWS_AS(fs::synthesize_corpus(spec, rng), std::invalid_argument);

  // smallest legal corpus: one country, one survey
  spec = {};
  spec.n_countries = 1;
  spec.surveys_per_country = 1;
  spec.K = 5;
  spec.year_hi = spec.year_lo + 9;
  spec.outlier_fraction = 0.0;
  fs::Corpus tiny = fs::synthesize_corpus(spec, rng);
  CHECK(tiny.surveys.size() == 2);
  CHECK(tiny.surveys[0].year == spec.year_lo);
}

TEST_CASE("composition benchmark draws match the flat-Dirichlet prior") {
  fs::AppendixASpec spec;
  spec.n_countries = 4000;
  spec.surveys_per_country = 2;
  Rng rng = make_rng(7600, 0);
  fs::AppendixAData ap = fs::synthesize_appendix_a(spec, rng);

  REQUIRE(ap.k == 4);
  REQUIRE(ap.countries.size() == 4000);
  std::vector<double> mu0, mu_last, phis;
  for (const auto& ct : ap.countries) {
    REQUIRE(ct.nu.size() == 3);
    REQUIRE(ct.mu.size() == 4);
    double tot = 0.0;
    for (double m : ct.mu) tot += m;
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-10));
    REQUIRE(ct.sizes.size() == 2);
    REQUIRE(ct.counts.size() == 2);
    for (size_t s = 0; s < ct.sizes.size(); ++s) {
      CHECK(ct.sizes[s] >= spec.size_lo);
      CHECK(ct.sizes[s] <= spec.size_hi);
      long long tot_c = 0;
      for (long long v : ct.counts[s]) {
        CHECK(v >= 0);
        tot_c += v;
      }
      CHECK(tot_c == ct.sizes[s]);
    }
    mu0.push_back(ct.mu[0]);
    mu_last.push_back(ct.mu[3]);
    phis.push_back(ct.phi);
  }

  // each marginal cell of a flat Dirichlet over 4 cells is Beta(1, 3)
  auto beta13_cdf = [](double x) { return 1.0 - std::pow(1.0 - x, 3.0); };
  std::sort(mu0.begin(), mu0.end());
  std::sort(mu_last.begin(), mu_last.end());
  CHECK(ks_test_pvalue(mu0, beta13_cdf) > 0.01);
  CHECK(ks_test_pvalue(mu_last, beta13_cdf) > 0.01);

  double phi_mean = 0.0;
  for (double p : phis) phi_mean += p;
  phi_mean /= phis.size();
  CHECK(std::fabs(phi_mean - 40.0) < 4.0 * 20.0 / std::sqrt(4000.0));

  // log sizes roughly uniform: mean of log n near the midpoint
  double lmean = 0.0;
  int n_sizes = 0;
  for (const auto& ct : ap.countries) {
    for (long long n : ct.sizes) {
      lmean += std::log(static_cast<double>(n));
      ++n_sizes;
    }
  }
  lmean /= n_sizes;
  double mid = 0.5 * (std::log(1000.0) + std::log(100000.0));
  CHECK(std::fabs(lmean - mid) < 0.1);

  Rng rng_b = make_rng(7600, 0);
  fs::AppendixAData again = fs::synthesize_appendix_a(spec, rng_b);
  CHECK(again.countries[123].mu == ap.countries[123].mu);
  CHECK(again.countries[123].counts == ap.countries[123].counts);

  fs::AppendixASpec bad;
  bad.k = 1;
  CHECK_THROWS_AS(fs::synthesize_appendix_a(bad, rng), std::invalid_argument);
  bad = {};
  bad.size_hi = 10;
  CHECK_THROWS_AS(fs::synthesize_appendix_a(bad, rng), std::invalid_argument);

  // explicit sizes are consumed in order, three per country
  fs::AppendixASpec real;
  real.sizes = {500, 600, 700, 800, 900, 1100, 1300};
  fs::AppendixAData with_real = fs::synthesize_appendix_a(real, rng);
  REQUIRE(with_real.countries.size() == 3);
  CHECK(with_real.countries[0].sizes == std::vector<long long>{500, 600, 700});
  CHECK(with_real.countries[2].sizes == std::vector<long long>{1300});
  CHECK(with_real.countries[2].counts.size() == 1);
  real.sizes = {500, 0};
  CHECK_THROWS_AS(fs::synthesize_appendix_a(real, rng), std::invalid_argument);
}
