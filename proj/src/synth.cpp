#include "fueltrends/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>

#include "fueltrends/distributions.hpp"
#include "fueltrends/special.hpp"

namespace fueltrends::synth {

namespace {

// f(year) = b[0] + sum_m b[m+1] * X_m(year)
double eval_coefs(const splines::SplineBasis& basis, const std::vector<double>& b, double year) {
  double f = b[0];
  for (int m = 0; m + 1 < static_cast<int>(b.size()); ++m) {
    f += b[m + 1] * basis.column_at(m, year);
  }
  return f;
}

std::string country_label(int c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%02d", c + 1);
  return buf;
}

// Intended trends on the logit scale; slope is the total change over the
// modeled window, area offsets shift the intercept.
struct BaseTrend {
  double intercept, slope, off_urban, off_rural;
};

constexpr BaseTrend kBase[kNumConditionals] = {
    {0.0, -4.0, -0.9, 0.9},   // solid
    {-1.5, -2.0, 0.2, -0.2},  // kerosene
    {0.5, 3.0, 0.5, -0.5},    // gas
    {-0.5, 2.0, 0.3, -0.3},   // electricity
    {1.0, -1.5, -0.5, 0.5},   // biomass within solid
    {-0.2, 1.0, 0.3, -0.3},   // charcoal within the rest of solid
    {1.2, -1.0, -0.3, 0.3},   // wood within biomass
    {-0.3, -0.5, 0.0, 0.0},   // crop waste within the rest of biomass
};

// Sequential stick sampling down the tiers. zero_var replaces the beta step
// with the exact mean; junk draws each stick uniformly on {0..remaining}.
std::array<long long, kNumNodes> sample_tier_counts(
    const std::array<double, kNumConditionals>& nu,
    const std::array<double, kNumConditionals>& phi, long long N, bool zero_var, bool junk,
    Rng& rng) {
  const auto& hier = FuelHierarchy::standard();
  std::array<long long, kNumNodes> v{};
  for (int t = 0; t < kNumTiers; ++t) {
    Tier tier = static_cast<Tier>(t);
    const auto& members = hier.tiers[t];
    long long rem = hier.has_parent(tier) ? v[static_cast<int>(hier.parent(tier))] : N;
    for (size_t m = 0; m + 1 < members.size(); ++m) {
      int ci = hier.conditional_index(members[m]);
      long long d = 0;
      if (rem > 0) {
        if (junk) {
          d = std::uniform_int_distribution<long long>(0, rem)(rng);
        } else {
          double p = zero_var ? nu[ci] : rbeta(rng, nu[ci] * phi[ci], (1.0 - nu[ci]) * phi[ci]);
          d = rbinom(rng, rem, p);
        }
      }
      v[static_cast<int>(members[m])] = d;
      rem -= d;
    }
    v[static_cast<int>(members.back())] = rem;
  }
  return v;
}

std::array<double, kNumNodes> absolute_means(const std::array<double, kNumConditionals>& nu) {
  const auto& hier = FuelHierarchy::standard();
  std::array<double, kNumNodes> a{};
  for (int t = 0; t < kNumTiers; ++t) {
    Tier tier = static_cast<Tier>(t);
    const auto& members = hier.tiers[t];
    double parent = hier.has_parent(tier) ? a[static_cast<int>(hier.parent(tier))] : 1.0;
    std::vector<double> sticks;
    for (size_t m = 0; m + 1 < members.size(); ++m) {
      sticks.push_back(nu[hier.conditional_index(members[m])]);
    }
    std::vector<double> mu = dist::marginal_means(sticks);
    for (size_t m = 0; m < members.size(); ++m) {
      a[static_cast<int>(members[m])] = parent * mu[m];
    }
  }
  return a;
}

std::array<double, kNumConditionals> sticks_from_absolute(
    const std::array<double, kNumNodes>& a) {
  const auto& hier = FuelHierarchy::standard();
  std::array<double, kNumConditionals> nu{};
  for (int t = 0; t < kNumTiers; ++t) {
    Tier tier = static_cast<Tier>(t);
    const auto& members = hier.tiers[t];
    double parent = hier.has_parent(tier) ? a[static_cast<int>(hier.parent(tier))] : 1.0;
    std::vector<double> shares(members.size());
    double tot = 0.0;
    for (size_t m = 0; m < members.size(); ++m) {
      shares[m] = std::max(a[static_cast<int>(members[m])] / std::max(parent, 1e-290), 1e-12);
      tot += shares[m];
    }
    for (double& s : shares) s /= tot;
    std::vector<double> rel = dist::relative_means_from_marginal(shares);
    for (size_t m = 0; m + 1 < members.size(); ++m) {
      nu[hier.conditional_index(members[m])] = rel[m];
    }
  }
  return nu;
}

std::vector<Node> reported_nodes(int pattern) {
  std::vector<Node> all;
  for (int n = 0; n < kNumNodes; ++n) all.push_back(static_cast<Node>(n));
  auto drop = [&all](std::initializer_list<Node> nodes) {
    for (Node n : nodes) all.erase(std::find(all.begin(), all.end(), n));
  };
  switch (pattern) {
    case 2:
      drop({Node::wood, Node::cropwaste, Node::dung});
      break;
    case 3:
      return {Node::solid, Node::kerosene, Node::gas, Node::electricity, Node::others};
    case 5:
      drop({Node::wood, Node::cropwaste});
      break;
    default:
      break;
  }
  return all;
}

data::SurveyRecord make_record(std::string id, const std::string& country, int year, Area area,
                               const std::array<long long, kNumNodes>& v, long long N,
                               double nonresponse, const std::vector<Node>& nodes) {
  data::SurveyRecord rec;
  rec.survey_id = std::move(id);
  rec.country = country;
  rec.year = year;
  rec.area = area;
  rec.nonresponse = nonresponse;
  rec.respondent_total = N;
  for (Node n : nodes) {
    rec.prop[static_cast<int>(n)] =
        static_cast<double>(v[static_cast<int>(n)]) / static_cast<double>(N) *
        (1.0 - nonresponse);
  }
  return rec;
}

}  // namespace

double CorpusTruth::nu_value(int i, int j, int c, double year) const {
  int nc = static_cast<int>(countries.size());
  return logistic(eval_coefs(basis, beta[(i * 2 + j) * nc + c], year));
}

double CorpusTruth::pi_value(int c, double year) const {
  double anchor = logit(urban.value(countries[c], year));
  return logistic(anchor + eval_coefs(basis, kappa[c], year));
}

Corpus synthesize_corpus(const CorpusSpec& spec, Rng& rng) {
  if (spec.n_countries < 1 || spec.n_regions < 1 || spec.n_supers < 1) {
    throw std::invalid_argument("synth: group counts must be positive");
  }
  if (spec.K < 3 || spec.year_hi - spec.year_lo + 1 < spec.K) {
    throw std::invalid_argument("synth: year grid shorter than the basis");
  }
  if (spec.N < 1 || spec.surveys_per_country < 1) {
    throw std::invalid_argument("synth: N and surveys per country must be positive");
  }
  if (spec.outlier_fraction < 0.0 || spec.outlier_fraction > 1.0) {
    throw std::invalid_argument("synth: outlier fraction outside [0,1]");
  }

  Corpus out;
  CorpusTruth& tr = out.truth;
  tr.K = spec.K;
  tr.N = spec.N;
  for (int y = spec.year_lo; y <= spec.year_hi; ++y) tr.years.push_back(y);
  tr.basis = splines::build_thin_plate_basis(tr.years, spec.K);
  const int T = tr.basis.T();
  const int nc = spec.n_countries;

  for (int c = 0; c < nc; ++c) tr.countries.push_back(country_label(c));
  auto region_of = [&spec](int c) { return c % spec.n_regions; };
  auto super_of = [&spec](int r) { return r % spec.n_supers; };
  for (int c = 0; c < nc; ++c) {
    tr.regions.entries[tr.countries[c]] = {"r" + std::to_string(region_of(c) + 1),
                                           "s" + std::to_string(super_of(region_of(c)) + 1)};
  }

  for (int c = 0; c < nc; ++c) {
    double p0 = -0.3 + 0.4 * rnorm(rng);
    double p1 = 0.3 + 0.9 * runif(rng);
    for (int t = 0; t < T; ++t) {
      double u = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
      tr.urban.add(tr.countries[c], tr.years[t], logistic(p0 + p1 * u));
    }
  }

  // Hierarchical trend coefficients: super-region draws around the intended
  // trend, regions around their super-region, countries around their region.
  // Linear terms live on the total-change scale until the final division.
  const double lin_span = tr.basis.X(T - 1, 0) - tr.basis.X(0, 0);
  const int P = spec.K + 1;
  tr.beta.resize(kNumConditionals * 2 * nc);
  tr.log_phi.resize(kNumConditionals * 2 * nc);
  tr.kappa.resize(nc);
  for (int i = 0; i < kNumConditionals; ++i) {
    for (int j = 0; j < 2; ++j) {
      const BaseTrend& base = kBase[i];
      std::vector<std::vector<double>> theta(spec.n_supers, std::vector<double>(P));
      for (auto& th : theta) {
        th[0] = base.intercept + (j == 0 ? base.off_urban : base.off_rural) + 0.4 * rnorm(rng);
        th[1] = (base.slope + 0.5 * rnorm(rng)) / lin_span;
        for (int k = 2; k < P; ++k) th[k] = 0.3 * rnorm(rng);
      }
      std::vector<std::vector<double>> gamma(spec.n_regions);
      for (int r = 0; r < spec.n_regions; ++r) {
        gamma[r] = theta[super_of(r)];
        gamma[r][0] += 0.25 * rnorm(rng);
        gamma[r][1] += 0.25 * rnorm(rng) / lin_span;
        for (int k = 2; k < P; ++k) gamma[r][k] += 0.1 * rnorm(rng);
      }
      for (int c = 0; c < nc; ++c) {
        std::vector<double> be = gamma[region_of(c)];
        be[0] += 0.25 * rnorm(rng);
        be[1] += 0.25 * rnorm(rng) / lin_span;
        for (int k = 2; k < P; ++k) be[k] += 0.1 * rnorm(rng);
        tr.beta[(i * 2 + j) * nc + c] = std::move(be);
      }
    }
  }
  for (int i = 0; i < kNumConditionals; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int c = 0; c < nc; ++c) {
        tr.log_phi[(i * 2 + j) * nc + c] = std::log(300.0) + 0.3 * rnorm(rng);
      }
    }
  }
  for (int c = 0; c < nc; ++c) {
    std::vector<double> ka(P);
    ka[0] = 0.15 * rnorm(rng);
    ka[1] = 0.1 * rnorm(rng) / lin_span;
    for (int k = 2; k < P; ++k) ka[k] = 0.08 * rnorm(rng);
    tr.kappa[c] = std::move(ka);
  }

  const int S = spec.surveys_per_country;
  auto year_of = [&spec, S](int s) {
    if (S == 1) return spec.year_lo;
    return spec.year_lo +
           static_cast<int>(std::llround(s * static_cast<double>(spec.year_hi - spec.year_lo) /
                                         (S - 1)));
  };
  auto id_of = [&tr, &year_of, S](int flat) {
    int c = flat / S, s = flat % S;
    return tr.countries[c] + "-" + std::to_string(year_of(s)) + "-" + std::to_string(s);
  };

  const int total_surveys = nc * S;
  std::set<int> junk_surveys;
  if (spec.outlier_fraction > 0.0) {
    long long want = std::max<long long>(
        1, std::llround(spec.outlier_fraction * total_surveys));
    want = std::min<long long>(want, total_surveys);
    std::uniform_int_distribution<int> pick(0, total_surveys - 1);
    while (static_cast<long long>(junk_surveys.size()) < want) junk_surveys.insert(pick(rng));
  }
  for (int flat : junk_surveys) tr.outlier_surveys.push_back(id_of(flat));

  auto area_params = [&tr, nc](int j, int c, int year, std::array<double, kNumConditionals>& nu,
                               std::array<double, kNumConditionals>& phi) {
    for (int i = 0; i < kNumConditionals; ++i) {
      nu[i] = tr.nu_value(i, j, c, year);
      phi[i] = std::exp(tr.log_phi[(i * 2 + j) * nc + c]);
    }
  };

  for (int c = 0; c < nc; ++c) {
    for (int s = 0; s < S; ++s) {
      const int flat = c * S + s;
      const int year = year_of(s);
      const int pattern = s % 6;
      const bool junk = junk_surveys.count(flat) > 0;
      const std::string id = id_of(flat);
      std::array<double, kNumConditionals> nu{}, phi{};
      if (pattern == 4) {
        std::array<double, kNumConditionals> nu_u{}, phi_u{}, nu_r{}, phi_r{};
        area_params(0, c, year, nu_u, phi_u);
        area_params(1, c, year, nu_r, phi_r);
        auto abs_u = absolute_means(nu_u);
        auto abs_r = absolute_means(nu_r);
        double pi = tr.pi_value(c, year);
        std::array<double, kNumNodes> mix{};
        for (int n = 0; n < kNumNodes; ++n) mix[n] = pi * abs_u[n] + (1.0 - pi) * abs_r[n];
        nu = sticks_from_absolute(mix);
        for (int i = 0; i < kNumConditionals; ++i) {
          phi[i] = std::exp(pi * std::log(phi_u[i]) + (1.0 - pi) * std::log(phi_r[i]));
        }
        auto v = sample_tier_counts(nu, phi, spec.N, spec.zero_survey_variability, junk, rng);
        out.surveys.push_back(make_record(id, tr.countries[c], year, Area::overall, v, spec.N,
                                          0.0, reported_nodes(pattern)));
        continue;
      }
      const double nr = pattern == 1 ? 0.04 : 0.0;
      for (int j = 0; j < 2; ++j) {
        area_params(j, c, year, nu, phi);
        auto v = sample_tier_counts(nu, phi, spec.N, spec.zero_survey_variability, junk, rng);
        out.surveys.push_back(make_record(id, tr.countries[c], year,
                                          j == 0 ? Area::urban : Area::rural, v, spec.N, nr,
                                          reported_nodes(pattern)));
      }
    }
  }

  if (spec.with_exclusions) {
    const int year = spec.year_lo + (spec.year_hi - spec.year_lo) / 2;
    std::array<double, kNumConditionals> nu{}, phi{};
    area_params(0, 0, year, nu, phi);
    auto draw = [&] {
      return sample_tier_counts(nu, phi, spec.N, spec.zero_survey_variability, false, rng);
    };
    out.surveys.push_back(make_record(tr.countries[0] + "-excl-a", tr.countries[0], year,
                                      Area::urban, draw(), spec.N, 0.0, {Node::solid}));
    out.surveys.push_back(make_record(tr.countries[0] + "-excl-b", tr.countries[0], year,
                                      Area::urban, draw(), spec.N, 0.2, reported_nodes(0)));
    auto flagged = make_record(tr.countries[0] + "-excl-c", tr.countries[0], year, Area::urban,
                               draw(), spec.N, 0.0, reported_nodes(0));
    flagged.flags.insert("unsuitable-for-modelling");
    out.surveys.push_back(std::move(flagged));
  }

  return out;
}

AppendixAData synthesize_appendix_a(const AppendixASpec& spec, Rng& rng) {
  if (spec.n_countries < 1 || spec.k < 2 || spec.surveys_per_country < 1) {
    throw std::invalid_argument("synth: bad composition benchmark shape");
  }
  if (spec.size_lo < 1 || spec.size_hi < spec.size_lo) {
    throw std::invalid_argument("synth: bad survey size range");
  }
  for (long long n : spec.sizes) {
    if (n < 1) throw std::invalid_argument("synth: explicit sizes must be positive");
  }
  AppendixAData out;
  out.k = spec.k;
  const double llo = std::log(static_cast<double>(spec.size_lo));
  const double lhi = std::log(static_cast<double>(spec.size_hi));
  const int spc = spec.surveys_per_country;
  int n_countries = spec.n_countries;
  if (!spec.sizes.empty()) {
    n_countries = (static_cast<int>(spec.sizes.size()) + spc - 1) / spc;
  }
  size_t next_size = 0;
  for (int c = 0; c < n_countries; ++c) {
    AppendixACountry ct;
    ct.nu.resize(spec.k - 1);
    for (int i = 0; i < spec.k - 1; ++i) {
      // stick-breaking form of a flat Dirichlet over k cells
      ct.nu[i] = clamp(rbeta(rng, 1.0, static_cast<double>(spec.k - 1 - i)), 1e-9, 1.0 - 1e-9);
    }
    ct.mu = dist::marginal_means(ct.nu);
    ct.phi = rgamma(rng, 4.0, 0.1);
    dist::GDParams par = dist::reparam(ct.nu, std::vector<double>(spec.k - 1, ct.phi));
    for (int s = 0; s < spc; ++s) {
      long long n = 0;
      if (!spec.sizes.empty()) {
        if (next_size >= spec.sizes.size()) break;
        n = spec.sizes[next_size++];
      } else {
        n = std::llround(std::exp(llo + runif(rng) * (lhi - llo)));
        n = std::clamp(n, spec.size_lo, spec.size_hi);
      }
      ct.sizes.push_back(n);
      ct.counts.push_back(dist::sample_gdm(par, n, rng));
    }
    out.countries.push_back(std::move(ct));
  }
  return out;
}

}  // namespace fueltrends::synth
