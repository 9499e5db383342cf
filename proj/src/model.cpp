#include "fueltrends/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fueltrends/distributions.hpp"
#include "fueltrends/special.hpp"

namespace fueltrends::model {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double norm_lpdf(double v, double mean, double sd) {
  double z = (v - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

// density of eta = log(sigma) when sigma has a half-normal(scale) prior;
// includes the log-scale Jacobian
double half_norm_log_lpdf(double eta, double scale) {
  double sigma = std::exp(eta);
  double z = sigma / scale;
  return std::log(2.0) - 0.5 * kLog2Pi - std::log(scale) - 0.5 * z * z + eta;
}

double log_logistic(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

}  // namespace

ParamIndex::ParamIndex(int K, int n_country, int n_region, int n_super, int n_survey)
    : K_(K), nc_(n_country), nr_(n_region), ns_(n_super), nsv_(n_survey) {
  const int C = kNumConditionals * 2;
  int p = 0;
  beta_ = p, p += C * nc_ * (K_ + 1);
  lbeta_ = p, p += C * nc_;
  gamma_ = p, p += C * nr_ * (K_ + 1);
  lgamma_ = p, p += C * nr_;
  theta_ = p, p += C * ns_ * (K_ + 1);
  ltheta_ = p, p += C * ns_;
  phi_ = p, p += C * nc_;
  kappa_ = p, p += nc_ * (K_ + 1);
  lkappa_ = p, p += nc_;
  upsb_ = p, p += C;
  upsg_ = p, p += C;
  upsp_ = p, p += C;
  sigb_ = p, p += 3 * C;
  sigg_ = p, p += 3 * C;
  sigp_ = p, p += C;
  upsk_ = p, p += 1;
  sigk_ = p, p += 3;
  rho_ = p, p += nsv_;
  size_ = p;
}

Model::Model(ModelConfig cfg, std::vector<data::SurveyRecord> kept,
             const data::UnUrbanSeries& urban, const data::RegionMap& regions)
    : cfg_(std::move(cfg)), hier_(FuelHierarchy::standard()) {
  if (cfg_.K < 3) throw std::invalid_argument("model: K must be at least 3");
  if (static_cast<int>(cfg_.years.size()) < cfg_.K)
    throw std::invalid_argument("model: need at least K grid years");
  if (cfg_.N <= 0) throw std::invalid_argument("model: N must be positive");
  if (kept.empty()) throw std::invalid_argument("model: no surveys");

  basis_ = splines::build_thin_plate_basis(cfg_.years, cfg_.K);
  penalty_diag_ = basis_.penalty.diagonal();
  penalty_logdet_ = 0.0;
  for (int k = 0; k < penalty_diag_.size(); ++k) penalty_logdet_ += std::log(penalty_diag_[k]);

  for (int i = 0; i < kNumConditionals; ++i) {
    cond_node_[i] = static_cast<int>(hier_.conditionals[i]);
  }
  cond_of_node_.fill(-1);
  for (int i = 0; i < kNumConditionals; ++i) cond_of_node_[cond_node_[i]] = i;

  std::set<std::string> country_set;
  for (const auto& r : kept) country_set.insert(r.country);
  countries_.assign(country_set.begin(), country_set.end());
  urban.require(country_set);
  regions.require(country_set);

  std::map<std::string, std::string> super_of_region;
  for (const auto& c : countries_) {
    const auto& [reg, sup] = regions.of(c);
    auto it = super_of_region.find(reg);
    if (it == super_of_region.end()) {
      super_of_region.emplace(reg, sup);
    } else if (it->second != sup) {
      throw std::runtime_error("region map: region " + reg +
                               " is assigned to two super-regions");
    }
  }
  for (const auto& [reg, sup] : super_of_region) regions_.push_back(reg);
  std::set<std::string> super_set;
  for (const auto& [reg, sup] : super_of_region) super_set.insert(sup);
  supers_.assign(super_set.begin(), super_set.end());

  auto region_index = [&](const std::string& name) {
    return static_cast<int>(std::lower_bound(regions_.begin(), regions_.end(), name) -
                            regions_.begin());
  };
  auto super_index = [&](const std::string& name) {
    return static_cast<int>(std::lower_bound(supers_.begin(), supers_.end(), name) -
                            supers_.begin());
  };
  r_of_c_.resize(countries_.size());
  for (std::size_t c = 0; c < countries_.size(); ++c)
    r_of_c_[c] = region_index(regions.of(countries_[c]).first);
  s_of_r_.resize(regions_.size());
  for (std::size_t r = 0; r < regions_.size(); ++r)
    s_of_r_[r] = super_index(super_of_region.at(regions_[r]));

  std::map<std::string, int> survey_index;
  rows_.reserve(kept.size());
  for (std::size_t n = 0; n < kept.size(); ++n) {
    const auto& rec = kept[n];
    CompiledRow row;
    row.source_index = static_cast<int>(n);
    row.survey_id = rec.survey_id;
    auto [it, inserted] = survey_index.emplace(rec.survey_id, static_cast<int>(survey_ids_.size()));
    if (inserted) survey_ids_.push_back(rec.survey_id);
    row.survey = it->second;
    row.country = country_index(rec.country);
    row.area = rec.area;
    row.year_idx = basis_.row_of_year(rec.year);
    if (row.year_idx < 0) {
      throw std::runtime_error("survey " + rec.survey_id + ": year " +
                               std::to_string(rec.year) + " is not on the model grid");
    }
    row.logit_P = logit(urban.value(rec.country, rec.year));
    row.layout = data::to_counts(rec, cfg_.N);
    for (int k = 0; k < kNumNodes; ++k) row.reported[k] = rec.prop[k].has_value();
    rows_.push_back(std::move(row));
  }

  const int nc = static_cast<int>(countries_.size());
  const int nr = static_cast<int>(regions_.size());
  const int ns = static_cast<int>(supers_.size());
  const int nsv = static_cast<int>(survey_ids_.size());

  area_rows_.assign(static_cast<std::size_t>(nc) * 2, {});
  overall_rows_.assign(nc, {});
  survey_rows_.assign(nsv, {});
  for (std::size_t n = 0; n < rows_.size(); ++n) {
    const auto& row = rows_[n];
    if (row.area == Area::overall) {
      overall_rows_[row.country].push_back(static_cast<int>(n));
    } else {
      int j = row.area == Area::urban ? 0 : 1;
      area_rows_[row.country * 2 + j].push_back(static_cast<int>(n));
    }
    survey_rows_[row.survey].push_back(static_cast<int>(n));
    for (int t = 0; t < kNumTiers; ++t) {
      if (row.layout.tiers[t].free_nodes.size() >= 2)
        impute_groups_.push_back({static_cast<int>(n), t});
    }
  }

  idx_ = ParamIndex(cfg_.K, nc, nr, ns, nsv);

  // sampler blocks; iteration order fixes the sweep order
  auto coef_block = [&](BlockSpec::Kind kind, int i, int j, int g, int first) {
    for (int part = 0; part < 3; ++part) {
      BlockSpec b;
      b.kind = kind, b.i = i, b.j = j, b.g = g, b.d = part;
      if (part < 2) {
        b.xs = {first + part};
      } else {
        for (int k = 2; k <= cfg_.K; ++k) b.xs.push_back(first + k);
        b.vector_block = true;
      }
      blocks_.push_back(std::move(b));
    }
  };
  auto scalar_block = [&](BlockSpec::Kind kind, int i, int j, int g, int d, int coord) {
    BlockSpec b;
    b.kind = kind, b.i = i, b.j = j, b.g = g, b.d = d;
    b.xs = {coord};
    blocks_.push_back(std::move(b));
  };

  for (int i = 0; i < kNumConditionals; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int c = 0; c < nc; ++c) {
        coef_block(BlockSpec::Kind::beta_coef, i, j, c, idx_.beta(i, j, c, 0));
        scalar_block(BlockSpec::Kind::loglam_beta, i, j, c, -1, idx_.loglam_beta(i, j, c));
        scalar_block(BlockSpec::Kind::logphi, i, j, c, -1, idx_.logphi(i, j, c));
      }
      for (int r = 0; r < nr; ++r) {
        coef_block(BlockSpec::Kind::gamma_coef, i, j, r, idx_.gamma(i, j, r, 0));
        scalar_block(BlockSpec::Kind::loglam_gamma, i, j, r, -1, idx_.loglam_gamma(i, j, r));
      }
      for (int s = 0; s < ns; ++s) {
        coef_block(BlockSpec::Kind::theta_coef, i, j, s, idx_.theta(i, j, s, 0));
        scalar_block(BlockSpec::Kind::loglam_theta, i, j, s, -1, idx_.loglam_theta(i, j, s));
      }
      scalar_block(BlockSpec::Kind::ups_beta, i, j, -1, -1, idx_.ups_beta(i, j));
      scalar_block(BlockSpec::Kind::ups_gamma, i, j, -1, -1, idx_.ups_gamma(i, j));
      scalar_block(BlockSpec::Kind::ups_phi, i, j, -1, -1, idx_.ups_phi(i, j));
      for (int d = 0; d < 3; ++d)
        scalar_block(BlockSpec::Kind::sig_beta, i, j, -1, d, idx_.logsig_beta(d, i, j));
      for (int d = 0; d < 3; ++d)
        scalar_block(BlockSpec::Kind::sig_gamma, i, j, -1, d, idx_.logsig_gamma(d, i, j));
      scalar_block(BlockSpec::Kind::sig_phi, i, j, -1, -1, idx_.logsig_phi(i, j));
    }
  }
  for (int c = 0; c < nc; ++c) {
    coef_block(BlockSpec::Kind::kappa_coef, -1, -1, c, idx_.kappa(c, 0));
    scalar_block(BlockSpec::Kind::loglam_kappa, -1, -1, c, -1, idx_.loglam_kappa(c));
  }
  scalar_block(BlockSpec::Kind::ups_kappa, -1, -1, -1, -1, idx_.ups_kappa());
  for (int d = 0; d < 3; ++d)
    scalar_block(BlockSpec::Kind::sig_kappa, -1, -1, -1, d, idx_.logsig_kappa(d));
  for (int surv = 0; surv < nsv; ++surv)
    scalar_block(BlockSpec::Kind::rho, -1, -1, surv, -1, idx_.logit_rho(surv));

  // reported names and scales, one per stored coordinate
  names_.assign(idx_.size(), std::string());
  emits_.assign(idx_.size(), EmitTransform::identity);
  const char* dim_name[3] = {"intercept", "linear", "smoothing"};
  auto fuel = [&](int i) { return node_name(static_cast<Node>(cond_node_[i])); };
  auto area = [](int j) { return j == 0 ? "urban" : "rural"; };
  for (int i = 0; i < kNumConditionals; ++i) {
    for (int j = 0; j < 2; ++j) {
      std::string tag = std::string(fuel(i)) + "," + area(j);
      for (int c = 0; c < nc; ++c) {
        for (int k = 0; k <= cfg_.K; ++k)
          names_[idx_.beta(i, j, c, k)] =
              "beta[" + tag + "," + countries_[c] + "," + std::to_string(k) + "]";
        names_[idx_.loglam_beta(i, j, c)] = "log_lambda_beta[" + tag + "," + countries_[c] + "]";
        names_[idx_.logphi(i, j, c)] = "phi[" + tag + "," + countries_[c] + "]";
        emits_[idx_.logphi(i, j, c)] = EmitTransform::exp_;
      }
      for (int r = 0; r < nr; ++r) {
        for (int k = 0; k <= cfg_.K; ++k)
          names_[idx_.gamma(i, j, r, k)] =
              "gamma[" + tag + "," + regions_[r] + "," + std::to_string(k) + "]";
        names_[idx_.loglam_gamma(i, j, r)] = "log_lambda_gamma[" + tag + "," + regions_[r] + "]";
      }
      for (int s = 0; s < ns; ++s) {
        for (int k = 0; k <= cfg_.K; ++k)
          names_[idx_.theta(i, j, s, k)] =
              "theta[" + tag + "," + supers_[s] + "," + std::to_string(k) + "]";
        names_[idx_.loglam_theta(i, j, s)] = "log_lambda_theta[" + tag + "," + supers_[s] + "]";
      }
      names_[idx_.ups_beta(i, j)] = "upsilon_beta[" + tag + "]";
      names_[idx_.ups_gamma(i, j)] = "upsilon_gamma[" + tag + "]";
      names_[idx_.ups_phi(i, j)] = "upsilon_phi[" + tag + "]";
      for (int d = 0; d < 3; ++d) {
        names_[idx_.logsig_beta(d, i, j)] =
            "sigma_beta[" + std::string(dim_name[d]) + "," + tag + "]";
        emits_[idx_.logsig_beta(d, i, j)] = EmitTransform::exp_;
        names_[idx_.logsig_gamma(d, i, j)] =
            "sigma_gamma[" + std::string(dim_name[d]) + "," + tag + "]";
        emits_[idx_.logsig_gamma(d, i, j)] = EmitTransform::exp_;
      }
      names_[idx_.logsig_phi(i, j)] = "sigma_phi[" + tag + "]";
      emits_[idx_.logsig_phi(i, j)] = EmitTransform::exp_;
    }
  }
  for (int c = 0; c < nc; ++c) {
    for (int k = 0; k <= cfg_.K; ++k)
      names_[idx_.kappa(c, k)] = "kappa[" + countries_[c] + "," + std::to_string(k) + "]";
    names_[idx_.loglam_kappa(c)] = "log_lambda_kappa[" + countries_[c] + "]";
  }
  names_[idx_.ups_kappa()] = "upsilon_kappa";
  for (int d = 0; d < 3; ++d) {
    names_[idx_.logsig_kappa(d)] = "sigma_kappa[" + std::string(dim_name[d]) + "]";
    emits_[idx_.logsig_kappa(d)] = EmitTransform::exp_;
  }
  for (int surv = 0; surv < nsv; ++surv) {
    names_[idx_.logit_rho(surv)] = "rho[" + survey_ids_[surv] + "]";
    emits_[idx_.logit_rho(surv)] = EmitTransform::logistic_;
  }
  for (const auto& n : names_) {
    if (n.empty()) throw std::logic_error("model: unnamed parameter coordinate");
  }
}

int Model::country_index(const std::string& name) const {
  auto it = std::lower_bound(countries_.begin(), countries_.end(), name);
  if (it == countries_.end() || *it != name)
    throw std::runtime_error("model: unknown country " + name);
  return static_cast<int>(it - countries_.begin());
}

void Model::emit(const std::vector<double>& x, std::vector<double>& out) const {
  out.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (emits_[i]) {
      case EmitTransform::identity: out[i] = x[i]; break;
      case EmitTransform::exp_: out[i] = std::exp(x[i]); break;
      case EmitTransform::logistic_: out[i] = logistic(x[i]); break;
    }
  }
}

Counts Model::initial_counts() const {
  Counts counts(rows_.size());
  for (std::size_t n = 0; n < rows_.size(); ++n) counts[n] = rows_[n].layout.v;
  return counts;
}

std::vector<double> Model::initial_x() const {
  std::vector<double> x(idx_.size(), 0.0);
  const double logphi0 = std::log(100.0);
  for (int i = 0; i < kNumConditionals; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int c = 0; c < idx_.n_country(); ++c) x[idx_.logphi(i, j, c)] = logphi0;
      x[idx_.ups_phi(i, j)] = logphi0;
    }
  }
  for (int surv = 0; surv < idx_.n_survey(); ++surv) x[idx_.logit_rho(surv)] = logit(0.9);
  return x;
}

double Model::f_value(const double* x, int i, int j, int c, int year_idx) const {
  const double* b = x + idx_.beta(i, j, c, 0);
  double f = b[0];
  for (int m = 0; m < cfg_.K; ++m) f += b[m + 1] * basis_.X(year_idx, m);
  return f;
}

double Model::f_value_year(const double* x, int i, int j, int c, double year) const {
  const double* b = x + idx_.beta(i, j, c, 0);
  double f = b[0];
  for (int m = 0; m < cfg_.K; ++m) f += b[m + 1] * basis_.column_at(m, year);
  return f;
}

double Model::relative_mean(const double* x, int i, int j, int c, int year_idx) const {
  return clamp(logistic(f_value(x, i, j, c, year_idx)), cfg_.nu_eps, 1.0 - cfg_.nu_eps);
}

double Model::g_value(const double* x, int c, int year_idx) const {
  const double* b = x + idx_.kappa(c, 0);
  double g = b[0];
  for (int m = 0; m < cfg_.K; ++m) g += b[m + 1] * basis_.X(year_idx, m);
  return g;
}

double Model::g_value_year(const double* x, int c, double year) const {
  const double* b = x + idx_.kappa(c, 0);
  double g = b[0];
  for (int m = 0; m < cfg_.K; ++m) g += b[m + 1] * basis_.column_at(m, year);
  return g;
}

double Model::urban_weight(const double* x, int c, int year_idx, double logit_P) const {
  return clamp(logistic(logit_P + g_value(x, c, year_idx)), cfg_.nu_eps, 1.0 - cfg_.nu_eps);
}

void Model::conditional_means(const double* x, int j, int c, int year_idx, double* nu8) const {
  for (int i = 0; i < kNumConditionals; ++i) nu8[i] = relative_mean(x, i, j, c, year_idx);
}

namespace {

// absolute per-node means from the stick means, tier by tier
void absolute_node_means(const FuelHierarchy& hier, const std::array<int, kNumNodes>& cond_of,
                         const double* nu8, std::array<double, kNumNodes>& abs11) {
  abs11.fill(0.0);
  for (int t = 0; t < kNumTiers; ++t) {
    const auto& members = hier.tiers[t];
    double tail = t == 0 ? 1.0 : abs11[static_cast<int>(hier.parent(static_cast<Tier>(t)))];
    for (std::size_t m = 0; m + 1 < members.size(); ++m) {
      int node = static_cast<int>(members[m]);
      double a = nu8[cond_of[node]] * tail;
      abs11[node] = a;
      tail -= a;
    }
    abs11[static_cast<int>(members.back())] = tail < 0.0 ? 0.0 : tail;
  }
}

// stick means back out of absolute node means, tier by tier
void sticks_from_absolute(const FuelHierarchy& hier, const std::array<int, kNumNodes>& cond_of,
                          const std::array<double, kNumNodes>& abs11, double eps, double* nu8) {
  for (int t = 0; t < kNumTiers; ++t) {
    const auto& members = hier.tiers[t];
    double tail = t == 0 ? 1.0 : abs11[static_cast<int>(hier.parent(static_cast<Tier>(t)))];
    for (std::size_t m = 0; m + 1 < members.size(); ++m) {
      int node = static_cast<int>(members[m]);
      double nu = tail > 0.0 ? abs11[node] / tail : 0.5;
      nu8[cond_of[node]] = clamp(nu, eps, 1.0 - eps);
      tail -= abs11[node];
    }
  }
}

}  // namespace

std::array<double, kNumNodes> Model::node_means(const double* x, Area area, int c, int year_idx,
                                                double logit_P) const {
  std::array<double, kNumNodes> abs11;
  if (area != Area::overall) {
    double nu8[kNumConditionals];
    conditional_means(x, area == Area::urban ? 0 : 1, c, year_idx, nu8);
    absolute_node_means(hier_, cond_of_node_, nu8, abs11);
    return abs11;
  }
  double nu_u[kNumConditionals], nu_r[kNumConditionals];
  conditional_means(x, 0, c, year_idx, nu_u);
  conditional_means(x, 1, c, year_idx, nu_r);
  std::array<double, kNumNodes> abs_u, abs_r;
  absolute_node_means(hier_, cond_of_node_, nu_u, abs_u);
  absolute_node_means(hier_, cond_of_node_, nu_r, abs_r);
  double pi = urban_weight(x, c, year_idx, logit_P);
  for (int n = 0; n < kNumNodes; ++n) abs11[n] = pi * abs_u[n] + (1.0 - pi) * abs_r[n];
  return abs11;
}

std::array<double, kNumNodes> Model::node_means_year(const double* x, Area area, int c,
                                                     double year, double logit_P,
                                                     bool un_offsets_only) const {
  auto trend_sticks = [&](int j, double* nu8) {
    for (int i = 0; i < kNumConditionals; ++i)
      nu8[i] = clamp(logistic(f_value_year(x, i, j, c, year)), cfg_.nu_eps, 1.0 - cfg_.nu_eps);
  };
  std::array<double, kNumNodes> abs11;
  if (area != Area::overall) {
    double nu8[kNumConditionals];
    trend_sticks(area == Area::urban ? 0 : 1, nu8);
    absolute_node_means(hier_, cond_of_node_, nu8, abs11);
    return abs11;
  }
  double nu_u[kNumConditionals], nu_r[kNumConditionals];
  trend_sticks(0, nu_u);
  trend_sticks(1, nu_r);
  std::array<double, kNumNodes> abs_u, abs_r;
  absolute_node_means(hier_, cond_of_node_, nu_u, abs_u);
  absolute_node_means(hier_, cond_of_node_, nu_r, abs_r);
  double offset = un_offsets_only ? 0.0 : g_value_year(x, c, year);
  double pi = clamp(logistic(logit_P + offset), cfg_.nu_eps, 1.0 - cfg_.nu_eps);
  for (int n = 0; n < kNumNodes; ++n) abs11[n] = pi * abs_u[n] + (1.0 - pi) * abs_r[n];
  return abs11;
}

void Model::overall_conditional_means(const double* x, int c, int year_idx, double logit_P,
                                      double* nu8, double* pi_out) const {
  double nu_u[kNumConditionals], nu_r[kNumConditionals];
  conditional_means(x, 0, c, year_idx, nu_u);
  conditional_means(x, 1, c, year_idx, nu_r);
  std::array<double, kNumNodes> abs_u, abs_r, abs_ov;
  absolute_node_means(hier_, cond_of_node_, nu_u, abs_u);
  absolute_node_means(hier_, cond_of_node_, nu_r, abs_r);
  double pi = urban_weight(x, c, year_idx, logit_P);
  for (int n = 0; n < kNumNodes; ++n) abs_ov[n] = pi * abs_u[n] + (1.0 - pi) * abs_r[n];
  sticks_from_absolute(hier_, cond_of_node_, abs_ov, cfg_.nu_eps, nu8);
  if (pi_out) *pi_out = pi;
}

void Model::area_phis(const double* x, int j, int c, double* phi8) const {
  for (int i = 0; i < kNumConditionals; ++i) phi8[i] = std::exp(x[idx_.logphi(i, j, c)]);
}

void Model::overall_phis(const double* x, int c, double pi, double* phi8) const {
  for (int i = 0; i < kNumConditionals; ++i) {
    phi8[i] = std::exp(pi * x[idx_.logphi(i, 0, c)] + (1.0 - pi) * x[idx_.logphi(i, 1, c)]);
  }
}

double Model::tier_loglik(const double* x, const std::array<long long, kNumNodes>& v,
                          const data::ObservationCounts& layout, int tier, const double* nu8,
                          const double* phi8, double rho) const {
  (void)x;
  if (!layout.tiers[tier].included) return 0.0;
  const auto& members = hier_.tiers[tier];
  long long running =
      tier == 0 ? layout.N : v[static_cast<int>(hier_.parent(static_cast<Tier>(tier)))];
  double lp = 0.0;
  for (std::size_t m = 0; m + 1 < members.size(); ++m) {
    int node = static_cast<int>(members[m]);
    int i = cond_of_node_[node];
    auto [a, b] = dist::reparam1(nu8[i], phi8[i]);
    lp += dist::log_pmf_outlier_mixture(v[node], a, b, running, rho);
    running -= v[node];
  }
  return lp;
}

double Model::row_loglik(const double* x, const Counts& counts, int row) const {
  const CompiledRow& R = rows_[row];
  double nu8[kNumConditionals], phi8[kNumConditionals];
  if (R.area == Area::overall) {
    double pi = 0.0;
    overall_conditional_means(x, R.country, R.year_idx, R.logit_P, nu8, &pi);
    overall_phis(x, R.country, pi, phi8);
  } else {
    int j = R.area == Area::urban ? 0 : 1;
    conditional_means(x, j, R.country, R.year_idx, nu8);
    area_phis(x, j, R.country, phi8);
  }
  double rho = logistic(x[idx_.logit_rho(R.survey)]);
  double lp = 0.0;
  for (int t = 0; t < kNumTiers; ++t)
    lp += tier_loglik(x, counts[row], R.layout, t, nu8, phi8, rho);
  return lp;
}

double Model::corpus_loglik(const double* x, const Counts& counts, Exec exec) const {
  std::vector<double> terms(rows_.size());
  parallel_for(rows_.size(), exec,
               [&](std::size_t n) { terms[n] = row_loglik(x, counts, static_cast<int>(n)); });
  return ordered_sum(terms);
}

double Model::row_term_area(const double* x, const Counts& counts, int row, int cond) const {
  const CompiledRow& R = rows_[row];
  int node = cond_node_[cond];
  int t = static_cast<int>(hier_.tier_of(static_cast<Node>(node)));
  if (!R.layout.tiers[t].included) return 0.0;
  const auto& v = counts[row];
  const auto& members = hier_.tiers[t];
  long long running = t == 0 ? R.layout.N : v[static_cast<int>(hier_.parent(static_cast<Tier>(t)))];
  for (std::size_t m = 0; static_cast<int>(members[m]) != node; ++m)
    running -= v[static_cast<int>(members[m])];
  int j = R.area == Area::urban ? 0 : 1;
  double nu = relative_mean(x, cond, j, R.country, R.year_idx);
  double phi = std::exp(x[idx_.logphi(cond, j, R.country)]);
  double rho = logistic(x[idx_.logit_rho(R.survey)]);
  auto [a, b] = dist::reparam1(nu, phi);
  return dist::log_pmf_outlier_mixture(v[node], a, b, running, rho);
}

double Model::penalty_mvn_logdens(const double* a, const double* b, double log_lambda) const {
  const int K1 = cfg_.K - 1;
  double lambda = std::exp(log_lambda);
  double q = 0.0;
  for (int k = 0; k < K1; ++k) {
    double diff = b ? a[k] - b[k] : a[k];
    q += penalty_diag_[k] * diff * diff;
  }
  return 0.5 * (K1 * log_lambda + penalty_logdet_) - 0.5 * lambda * q - 0.5 * K1 * kLog2Pi;
}

double Model::prior_beta_block(const double* x, int i, int j, int c, int part) const {
  int r = r_of_c_[c];
  if (part == 0) {
    return norm_lpdf(x[idx_.beta(i, j, c, 0)], x[idx_.gamma(i, j, r, 0)],
                     std::exp(x[idx_.logsig_beta(0, i, j)]));
  }
  if (part == 1) {
    return norm_lpdf(x[idx_.beta(i, j, c, 1)], x[idx_.gamma(i, j, r, 1)],
                     std::exp(x[idx_.logsig_beta(1, i, j)]));
  }
  return penalty_mvn_logdens(x + idx_.beta(i, j, c, 2), x + idx_.gamma(i, j, r, 2),
                             x[idx_.loglam_beta(i, j, c)]);
}

double Model::prior_gamma_block(const double* x, int i, int j, int r, int part) const {
  int s = s_of_r_[r];
  if (part == 0) {
    return norm_lpdf(x[idx_.gamma(i, j, r, 0)], x[idx_.theta(i, j, s, 0)],
                     std::exp(x[idx_.logsig_gamma(0, i, j)]));
  }
  if (part == 1) {
    return norm_lpdf(x[idx_.gamma(i, j, r, 1)], x[idx_.theta(i, j, s, 1)],
                     std::exp(x[idx_.logsig_gamma(1, i, j)]));
  }
  return penalty_mvn_logdens(x + idx_.gamma(i, j, r, 2), x + idx_.theta(i, j, s, 2),
                             x[idx_.loglam_gamma(i, j, r)]);
}

double Model::prior_theta_block(const double* x, int i, int j, int s, int part) const {
  if (part == 0) return norm_lpdf(x[idx_.theta(i, j, s, 0)], 0.0, cfg_.coef_prior_sd);
  if (part == 1) return norm_lpdf(x[idx_.theta(i, j, s, 1)], 0.0, cfg_.coef_prior_sd);
  return penalty_mvn_logdens(x + idx_.theta(i, j, s, 2), nullptr, x[idx_.loglam_theta(i, j, s)]);
}

double Model::prior_kappa_block(const double* x, int c, int part) const {
  if (part == 0)
    return norm_lpdf(x[idx_.kappa(c, 0)], 0.0, std::exp(x[idx_.logsig_kappa(0)]));
  if (part == 1)
    return norm_lpdf(x[idx_.kappa(c, 1)], 0.0, std::exp(x[idx_.logsig_kappa(1)]));
  return penalty_mvn_logdens(x + idx_.kappa(c, 2), nullptr, x[idx_.loglam_kappa(c)]);
}

double Model::log_prior(const double* x) const {
  const int nc = idx_.n_country(), nr = idx_.n_region(), ns = idx_.n_super();
  double lp = 0.0;
  for (int i = 0; i < kNumConditionals; ++i) {
    for (int j = 0; j < 2; ++j) {
      double sb2 = std::exp(x[idx_.logsig_beta(2, i, j)]);
      double sg2 = std::exp(x[idx_.logsig_gamma(2, i, j)]);
      double sp = std::exp(x[idx_.logsig_phi(i, j)]);
      double ub = x[idx_.ups_beta(i, j)], ug = x[idx_.ups_gamma(i, j)], up = x[idx_.ups_phi(i, j)];
      for (int c = 0; c < nc; ++c) {
        for (int part = 0; part < 3; ++part) lp += prior_beta_block(x, i, j, c, part);
        lp += norm_lpdf(x[idx_.loglam_beta(i, j, c)], ub, sb2);
        lp += norm_lpdf(x[idx_.logphi(i, j, c)], up, sp);
      }
      for (int r = 0; r < nr; ++r) {
        for (int part = 0; part < 3; ++part) lp += prior_gamma_block(x, i, j, r, part);
        lp += norm_lpdf(x[idx_.loglam_gamma(i, j, r)], ug, sg2);
      }
      for (int s = 0; s < ns; ++s) {
        for (int part = 0; part < 3; ++part) lp += prior_theta_block(x, i, j, s, part);
        lp += norm_lpdf(x[idx_.loglam_theta(i, j, s)], 0.0, cfg_.coef_prior_sd);
      }
      lp += norm_lpdf(ub, 0.0, cfg_.coef_prior_sd);
      lp += norm_lpdf(ug, 0.0, cfg_.coef_prior_sd);
      lp += norm_lpdf(up, 0.0, cfg_.coef_prior_sd);
      for (int d = 0; d < 3; ++d) {
        lp += half_norm_log_lpdf(x[idx_.logsig_beta(d, i, j)], cfg_.sigma_prior_sd);
        lp += half_norm_log_lpdf(x[idx_.logsig_gamma(d, i, j)], cfg_.sigma_prior_sd);
      }
      lp += half_norm_log_lpdf(x[idx_.logsig_phi(i, j)], cfg_.sigma_prior_sd);
    }
  }
  double uk = x[idx_.ups_kappa()];
  double sk2 = std::exp(x[idx_.logsig_kappa(2)]);
  for (int c = 0; c < nc; ++c) {
    for (int part = 0; part < 3; ++part) lp += prior_kappa_block(x, c, part);
    lp += norm_lpdf(x[idx_.loglam_kappa(c)], uk, sk2);
  }
  lp += norm_lpdf(uk, 0.0, cfg_.coef_prior_sd);
  for (int d = 0; d < 3; ++d) lp += half_norm_log_lpdf(x[idx_.logsig_kappa(d)], cfg_.sigma_prior_sd);
  for (int surv = 0; surv < idx_.n_survey(); ++surv) {
    double z = x[idx_.logit_rho(surv)];
    lp += cfg_.rho_a * log_logistic(z) + cfg_.rho_b * log_logistic(-z) -
          log_beta(cfg_.rho_a, cfg_.rho_b);
  }
  return lp;
}

double Model::log_posterior(const double* x, const Counts& counts) const {
  return log_prior(x) + corpus_loglik(x, counts);
}

double Model::block_logdens(int block, const double* x, const Counts& counts) const {
  const BlockSpec& B = blocks_[block];
  const int nc = idx_.n_country(), nr = idx_.n_region();
  auto area_lik = [&](int i, int j, int c) {
    double lik = 0.0;
    for (int row : area_rows_[c * 2 + j]) lik += row_term_area(x, counts, row, i);
    for (int row : overall_rows_[c]) lik += row_loglik(x, counts, row);
    return lik;
  };
  switch (B.kind) {
    case BlockSpec::Kind::beta_coef:
      return prior_beta_block(x, B.i, B.j, B.g, B.d) + area_lik(B.i, B.j, B.g);
    case BlockSpec::Kind::logphi:
      return norm_lpdf(x[idx_.logphi(B.i, B.j, B.g)], x[idx_.ups_phi(B.i, B.j)],
                       std::exp(x[idx_.logsig_phi(B.i, B.j)])) +
             area_lik(B.i, B.j, B.g);
    case BlockSpec::Kind::loglam_beta:
      return norm_lpdf(x[idx_.loglam_beta(B.i, B.j, B.g)], x[idx_.ups_beta(B.i, B.j)],
                       std::exp(x[idx_.logsig_beta(2, B.i, B.j)])) +
             prior_beta_block(x, B.i, B.j, B.g, 2);
    case BlockSpec::Kind::gamma_coef: {
      double lp = prior_gamma_block(x, B.i, B.j, B.g, B.d);
      for (int c = 0; c < nc; ++c)
        if (r_of_c_[c] == B.g) lp += prior_beta_block(x, B.i, B.j, c, B.d);
      return lp;
    }
    case BlockSpec::Kind::loglam_gamma:
      return norm_lpdf(x[idx_.loglam_gamma(B.i, B.j, B.g)], x[idx_.ups_gamma(B.i, B.j)],
                       std::exp(x[idx_.logsig_gamma(2, B.i, B.j)])) +
             prior_gamma_block(x, B.i, B.j, B.g, 2);
    case BlockSpec::Kind::theta_coef: {
      double lp = prior_theta_block(x, B.i, B.j, B.g, B.d);
      for (int r = 0; r < nr; ++r)
        if (s_of_r_[r] == B.g) lp += prior_gamma_block(x, B.i, B.j, r, B.d);
      return lp;
    }
    case BlockSpec::Kind::loglam_theta:
      return norm_lpdf(x[idx_.loglam_theta(B.i, B.j, B.g)], 0.0, cfg_.coef_prior_sd) +
             prior_theta_block(x, B.i, B.j, B.g, 2);
    case BlockSpec::Kind::kappa_coef: {
      double lp = prior_kappa_block(x, B.g, B.d);
      for (int row : overall_rows_[B.g]) lp += row_loglik(x, counts, row);
      return lp;
    }
    case BlockSpec::Kind::loglam_kappa:
      return norm_lpdf(x[idx_.loglam_kappa(B.g)], x[idx_.ups_kappa()],
                       std::exp(x[idx_.logsig_kappa(2)])) +
             prior_kappa_block(x, B.g, 2);
    case BlockSpec::Kind::ups_beta: {
      double u = x[idx_.ups_beta(B.i, B.j)];
      double s = std::exp(x[idx_.logsig_beta(2, B.i, B.j)]);
      double lp = norm_lpdf(u, 0.0, cfg_.coef_prior_sd);
      for (int c = 0; c < nc; ++c) lp += norm_lpdf(x[idx_.loglam_beta(B.i, B.j, c)], u, s);
      return lp;
    }
    case BlockSpec::Kind::ups_gamma: {
      double u = x[idx_.ups_gamma(B.i, B.j)];
      double s = std::exp(x[idx_.logsig_gamma(2, B.i, B.j)]);
      double lp = norm_lpdf(u, 0.0, cfg_.coef_prior_sd);
      for (int r = 0; r < nr; ++r) lp += norm_lpdf(x[idx_.loglam_gamma(B.i, B.j, r)], u, s);
      return lp;
    }
    case BlockSpec::Kind::ups_phi: {
      double u = x[idx_.ups_phi(B.i, B.j)];
      double s = std::exp(x[idx_.logsig_phi(B.i, B.j)]);
      double lp = norm_lpdf(u, 0.0, cfg_.coef_prior_sd);
      for (int c = 0; c < nc; ++c) lp += norm_lpdf(x[idx_.logphi(B.i, B.j, c)], u, s);
      return lp;
    }
    case BlockSpec::Kind::ups_kappa: {
      double u = x[idx_.ups_kappa()];
      double s = std::exp(x[idx_.logsig_kappa(2)]);
      double lp = norm_lpdf(u, 0.0, cfg_.coef_prior_sd);
      for (int c = 0; c < nc; ++c) lp += norm_lpdf(x[idx_.loglam_kappa(c)], u, s);
      return lp;
    }
    case BlockSpec::Kind::sig_beta: {
      double lp = half_norm_log_lpdf(x[idx_.logsig_beta(B.d, B.i, B.j)], cfg_.sigma_prior_sd);
      for (int c = 0; c < nc; ++c) {
        if (B.d == 2) {
          lp += norm_lpdf(x[idx_.loglam_beta(B.i, B.j, c)], x[idx_.ups_beta(B.i, B.j)],
                          std::exp(x[idx_.logsig_beta(2, B.i, B.j)]));
        } else {
          lp += prior_beta_block(x, B.i, B.j, c, B.d);
        }
      }
      return lp;
    }
    case BlockSpec::Kind::sig_gamma: {
      double lp = half_norm_log_lpdf(x[idx_.logsig_gamma(B.d, B.i, B.j)], cfg_.sigma_prior_sd);
      for (int r = 0; r < nr; ++r) {
        if (B.d == 2) {
          lp += norm_lpdf(x[idx_.loglam_gamma(B.i, B.j, r)], x[idx_.ups_gamma(B.i, B.j)],
                          std::exp(x[idx_.logsig_gamma(2, B.i, B.j)]));
        } else {
          lp += prior_gamma_block(x, B.i, B.j, r, B.d);
        }
      }
      return lp;
    }
    case BlockSpec::Kind::sig_phi: {
      double lp = half_norm_log_lpdf(x[idx_.logsig_phi(B.i, B.j)], cfg_.sigma_prior_sd);
      double u = x[idx_.ups_phi(B.i, B.j)];
      double s = std::exp(x[idx_.logsig_phi(B.i, B.j)]);
      for (int c = 0; c < nc; ++c) lp += norm_lpdf(x[idx_.logphi(B.i, B.j, c)], u, s);
      return lp;
    }
    case BlockSpec::Kind::sig_kappa: {
      double lp = half_norm_log_lpdf(x[idx_.logsig_kappa(B.d)], cfg_.sigma_prior_sd);
      for (int c = 0; c < nc; ++c) {
        if (B.d == 2) {
          lp += norm_lpdf(x[idx_.loglam_kappa(c)], x[idx_.ups_kappa()],
                          std::exp(x[idx_.logsig_kappa(2)]));
        } else {
          lp += prior_kappa_block(x, c, B.d);
        }
      }
      return lp;
    }
    case BlockSpec::Kind::rho: {
      double z = x[idx_.logit_rho(B.g)];
      double lp = cfg_.rho_a * log_logistic(z) + cfg_.rho_b * log_logistic(-z) -
                  log_beta(cfg_.rho_a, cfg_.rho_b);
      for (int row : survey_rows_[B.g]) lp += row_loglik(x, counts, row);
      return lp;
    }
  }
  throw std::logic_error("model: unhandled block kind");
}

bool Model::imputation_move(int group, const double* x, Counts& counts, double geo_mean,
                            Rng& rng) const {
  const ImputeGroup& G = impute_groups_[group];
  const CompiledRow& R = rows_[G.row];
  const auto& free_nodes = R.layout.tiers[G.tier].free_nodes;
  int pair = free_nodes.size() > 2
                 ? static_cast<int>(runif(rng) * (free_nodes.size() - 1))
                 : 0;
  if (pair > static_cast<int>(free_nodes.size()) - 2) pair = static_cast<int>(free_nodes.size()) - 2;
  long long m = 1;
  if (geo_mean > 1.0) {
    double q = 1.0 / geo_mean;
    m = 1 + std::geometric_distribution<long long>(q)(rng);
  }
  long long delta = runif(rng) < 0.5 ? m : -m;

  // gather the full move list, cascading totals into child tiers
  std::array<long long, kNumNodes> old = counts[G.row];
  auto& v = counts[G.row];
  double before = row_loglik(x, counts, G.row);
  bool ok = true;
  auto apply = [&](int node, long long change) {
    while (true) {
      v[node] += change;
      if (v[node] < R.layout.min_count[node]) {
        ok = false;
        return;
      }
      Node n = static_cast<Node>(node);
      int child_tier = -1;
      if (n == Node::solid) child_tier = 1;
      if (n == Node::biomass) child_tier = 2;
      if (child_tier < 0 || !R.layout.tiers[child_tier].included) return;
      node = static_cast<int>(R.layout.tiers[child_tier].free_nodes.back());
    }
  };
  apply(static_cast<int>(free_nodes[pair]), delta);
  if (ok) apply(static_cast<int>(free_nodes[pair + 1]), -delta);
  if (!ok) {
    v = old;
    return false;
  }
  double after = row_loglik(x, counts, G.row);
  if (std::log(runif(rng)) < after - before) return true;
  v = old;
  return false;
}

std::array<long long, kNumNodes> Model::simulate_counts(const double* x, int row,
                                                        Rng& rng) const {
  const CompiledRow& R = rows_[row];
  return simulate_counts_at(x, R.area, R.country, R.year_idx, R.logit_P, R.layout.N, rng);
}

std::array<long long, kNumNodes> Model::simulate_tiers(const double* nu8, const double* phi8,
                                                       long long N, Rng& rng) const {
  std::array<long long, kNumNodes> v{};
  for (int t = 0; t < kNumTiers; ++t) {
    const auto& members = hier_.tiers[t];
    long long total = t == 0 ? N : v[static_cast<int>(hier_.parent(static_cast<Tier>(t)))];
    dist::GDParams par;
    for (std::size_t m = 0; m + 1 < members.size(); ++m) {
      int i = cond_of_node_[static_cast<int>(members[m])];
      auto [a, b] = dist::reparam1(nu8[i], phi8[i]);
      par.alpha.push_back(a);
      par.beta.push_back(b);
    }
    std::vector<long long> draw = dist::sample_gdm(par, total, rng);
    for (std::size_t m = 0; m < members.size(); ++m) v[static_cast<int>(members[m])] = draw[m];
  }
  return v;
}

std::array<long long, kNumNodes> Model::simulate_counts_at(const double* x, Area area, int c,
                                                           int year_idx, double logit_P,
                                                           long long N, Rng& rng) const {
  double nu8[kNumConditionals], phi8[kNumConditionals];
  if (area == Area::overall) {
    double pi = 0.0;
    overall_conditional_means(x, c, year_idx, logit_P, nu8, &pi);
    overall_phis(x, c, pi, phi8);
  } else {
    int j = area == Area::urban ? 0 : 1;
    conditional_means(x, j, c, year_idx, nu8);
    area_phis(x, j, c, phi8);
  }
  return simulate_tiers(nu8, phi8, N, rng);
}

std::array<long long, kNumNodes> Model::simulate_counts_year(const double* x, Area area, int c,
                                                             double year, double logit_P,
                                                             long long N, Rng& rng,
                                                             bool un_offsets_only) const {
  double nu8[kNumConditionals], phi8[kNumConditionals];
  if (area == Area::overall) {
    std::array<double, kNumNodes> abs11 = node_means_year(x, area, c, year, logit_P,
                                                          un_offsets_only);
    sticks_from_absolute(hier_, cond_of_node_, abs11, cfg_.nu_eps, nu8);
    double offset = un_offsets_only ? 0.0 : g_value_year(x, c, year);
    double pi = clamp(logistic(logit_P + offset), cfg_.nu_eps, 1.0 - cfg_.nu_eps);
    overall_phis(x, c, pi, phi8);
  } else {
    int j = area == Area::urban ? 0 : 1;
    for (int i = 0; i < kNumConditionals; ++i)
      nu8[i] = clamp(logistic(f_value_year(x, i, j, c, year)), cfg_.nu_eps, 1.0 - cfg_.nu_eps);
    area_phis(x, j, c, phi8);
  }
  return simulate_tiers(nu8, phi8, N, rng);
}

}  // namespace fueltrends::model
