#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fueltrends/data.hpp"
#include "fueltrends/hierarchy.hpp"
#include "fueltrends/parallel.hpp"
#include "fueltrends/rng.hpp"
#include "fueltrends/splines.hpp"

namespace fueltrends::model {

struct ModelConfig {
  std::vector<int> years;        // modeled calendar grid, strictly increasing
  int K = 10;                    // spline columns (1 linear + K-1 non-linear)
  long long N = 100000;          // artificial denominator for proportion surveys
  double coef_prior_sd = 10.0;   // fixed effects and hyper means
  double sigma_prior_sd = 10.0;  // half-normal scale for hyper sds
  double rho_a = 9.0, rho_b = 1.0;  // Beta prior on the non-outlier weight
  double nu_eps = 1e-12;            // clamp for relative means
};

// Flat addressing of the sampled parameter vector. Positive quantities are
// stored on the log scale and rho on the logit scale; `emit` maps a stored
// vector to the reported scale.
class ParamIndex {
 public:
  ParamIndex() = default;
  ParamIndex(int K, int n_country, int n_region, int n_super, int n_survey);

  int size() const { return size_; }
  int coefs() const { return K_ + 1; }  // intercept, linear, K-1 non-linear

  // spline coefficients; k = 0 intercept, 1 linear, 2..K non-linear
  int beta(int i, int j, int c, int k) const { return beta_ + ((i * 2 + j) * nc_ + c) * (K_ + 1) + k; }
  int loglam_beta(int i, int j, int c) const { return lbeta_ + (i * 2 + j) * nc_ + c; }
  int gamma(int i, int j, int r, int k) const { return gamma_ + ((i * 2 + j) * nr_ + r) * (K_ + 1) + k; }
  int loglam_gamma(int i, int j, int r) const { return lgamma_ + (i * 2 + j) * nr_ + r; }
  int theta(int i, int j, int s, int k) const { return theta_ + ((i * 2 + j) * ns_ + s) * (K_ + 1) + k; }
  int loglam_theta(int i, int j, int s) const { return ltheta_ + (i * 2 + j) * ns_ + s; }
  int logphi(int i, int j, int c) const { return phi_ + (i * 2 + j) * nc_ + c; }
  int kappa(int c, int k) const { return kappa_ + c * (K_ + 1) + k; }
  int loglam_kappa(int c) const { return lkappa_ + c; }
  int ups_beta(int i, int j) const { return upsb_ + i * 2 + j; }
  int ups_gamma(int i, int j) const { return upsg_ + i * 2 + j; }
  int ups_phi(int i, int j) const { return upsp_ + i * 2 + j; }
  // d = 0 intercept sd, 1 linear sd, 2 log-smoothing sd
  int logsig_beta(int d, int i, int j) const { return sigb_ + (d * kNumConditionals + i) * 2 + j; }
  int logsig_gamma(int d, int i, int j) const { return sigg_ + (d * kNumConditionals + i) * 2 + j; }
  int logsig_phi(int i, int j) const { return sigp_ + i * 2 + j; }
  int ups_kappa() const { return upsk_; }
  int logsig_kappa(int d) const { return sigk_ + d; }
  int logit_rho(int surv) const { return rho_ + surv; }

  int n_country() const { return nc_; }
  int n_region() const { return nr_; }
  int n_super() const { return ns_; }
  int n_survey() const { return nsv_; }
  int K() const { return K_; }

 private:
  int K_ = 0, nc_ = 0, nr_ = 0, ns_ = 0, nsv_ = 0;
  int beta_ = 0, lbeta_ = 0, gamma_ = 0, lgamma_ = 0, theta_ = 0, ltheta_ = 0;
  int phi_ = 0, kappa_ = 0, lkappa_ = 0;
  int upsb_ = 0, upsg_ = 0, upsp_ = 0, sigb_ = 0, sigg_ = 0, sigp_ = 0;
  int upsk_ = 0, sigk_ = 0, rho_ = 0;
  int size_ = 0;
};

enum class EmitTransform : unsigned char { identity, exp_, logistic_ };

// A sampler block: the coordinates proposed together plus where its Markov
// blanket is evaluated. Kind/payload drive block_logdens dispatch.
struct BlockSpec {
  enum class Kind : unsigned char {
    beta_coef,   // i, j, g=country, d=part (0 intercept, 1 linear, 2 non-linear)
    loglam_beta, // i, j, g=country
    gamma_coef,  // i, j, g=region, d=part
    loglam_gamma,
    theta_coef,  // i, j, g=super-region, d=part
    loglam_theta,
    logphi,      // i, j, g=country
    kappa_coef,  // g=country, d=part
    loglam_kappa,
    ups_beta,    // i, j
    ups_gamma,
    ups_phi,
    ups_kappa,
    sig_beta,    // d, i, j
    sig_gamma,
    sig_phi,     // i, j
    sig_kappa,   // d
    rho,         // g=survey
  };
  Kind kind;
  int i = -1, j = -1, g = -1, d = -1;
  std::vector<int> xs;
  bool vector_block = false;
};

struct CompiledRow {
  int source_index = 0;  // position in the kept-record list handed to the model
  std::string survey_id;
  int survey = 0;  // rho index
  int country = 0;
  Area area = Area::urban;
  int year_idx = 0;
  double logit_P = 0.0;
  data::ObservationCounts layout;  // statuses, free groups, and initial counts
  std::array<bool, kNumNodes> reported{};  // cells the survey actually stated
};

// Latent per-row counts; mutated by the imputation sweep only.
using Counts = std::vector<std::array<long long, kNumNodes>>;

// One imputable sibling group: the free cells of one tier of one row.
struct ImputeGroup {
  int row = 0;
  int tier = 0;
};

class Model {
 public:
  Model(ModelConfig cfg, std::vector<data::SurveyRecord> kept,
        const data::UnUrbanSeries& urban, const data::RegionMap& regions);

  const ModelConfig& config() const { return cfg_; }
  const splines::SplineBasis& basis() const { return basis_; }
  const ParamIndex& index() const { return idx_; }
  const std::vector<BlockSpec>& blocks() const { return blocks_; }
  const std::vector<CompiledRow>& rows() const { return rows_; }
  const std::vector<ImputeGroup>& impute_groups() const { return impute_groups_; }
  const std::vector<std::string>& countries() const { return countries_; }
  const std::vector<std::string>& regions() const { return regions_; }
  const std::vector<std::string>& super_regions() const { return supers_; }
  const std::vector<std::string>& survey_ids() const { return survey_ids_; }
  int region_of(int c) const { return r_of_c_[c]; }
  int super_of(int r) const { return s_of_r_[r]; }
  int country_index(const std::string& name) const;
  const std::vector<std::string>& param_names() const { return names_; }
  const std::vector<EmitTransform>& emit_transforms() const { return emits_; }
  void emit(const std::vector<double>& x, std::vector<double>& out) const;

  Counts initial_counts() const;
  std::vector<double> initial_x() const;

  // trend value f_{i,j,c}(t) on the fitted grid and at arbitrary years
  double f_value(const double* x, int i, int j, int c, int year_idx) const;
  double f_value_year(const double* x, int i, int j, int c, double year) const;
  double relative_mean(const double* x, int i, int j, int c, int year_idx) const;
  double g_value(const double* x, int c, int year_idx) const;
  double g_value_year(const double* x, int c, double year) const;
  double urban_weight(const double* x, int c, int year_idx, double logit_P) const;

  // relative means per conditional for one area (0 urban, 1 rural) at a grid
  // year; the overall variant mixes the areas through pi
  void conditional_means(const double* x, int j, int c, int year_idx, double* nu8) const;
  void overall_conditional_means(const double* x, int c, int year_idx, double logit_P,
                                 double* nu8, double* pi_out) const;
  // absolute per-node means for urban/rural/overall
  std::array<double, kNumNodes> node_means(const double* x, Area area, int c, int year_idx,
                                           double logit_P) const;
  // off-grid variant used for forecasting; un_offsets_only drops the fitted
  // urban-weight spline so the mixing weight is the anchor share alone
  std::array<double, kNumNodes> node_means_year(const double* x, Area area, int c, double year,
                                                double logit_P,
                                                bool un_offsets_only = false) const;

  double row_loglik(const double* x, const Counts& counts, int row) const;
  double corpus_loglik(const double* x, const Counts& counts,
                       Exec exec = Exec::serial) const;
  double log_prior(const double* x) const;
  double log_posterior(const double* x, const Counts& counts) const;
  double block_logdens(int block, const double* x, const Counts& counts) const;

  // one symmetric transfer proposal in a free-count group; returns true when
  // the move was accepted (counts updated in place)
  bool imputation_move(int group, const double* x, Counts& counts, double geo_mean,
                       Rng& rng) const;

  // posterior-predictive counts for one row's setting at parameters x
  std::array<long long, kNumNodes> simulate_counts(const double* x, int row, Rng& rng) const;
  // same generative draw for an arbitrary (area, country, grid year)
  std::array<long long, kNumNodes> simulate_counts_at(const double* x, Area area, int c,
                                                      int year_idx, double logit_P, long long N,
                                                      Rng& rng) const;
  // off-grid variant; see node_means_year for un_offsets_only
  std::array<long long, kNumNodes> simulate_counts_year(const double* x, Area area, int c,
                                                        double year, double logit_P, long long N,
                                                        Rng& rng,
                                                        bool un_offsets_only = false) const;

 private:
  double tier_loglik(const double* x, const std::array<long long, kNumNodes>& v,
                     const data::ObservationCounts& layout, int tier, const double* nu8,
                     const double* phi8, double rho) const;
  void area_phis(const double* x, int j, int c, double* phi8) const;
  void overall_phis(const double* x, int c, double pi, double* phi8) const;
  double row_term_area(const double* x, const Counts& counts, int row, int cond) const;
  std::array<long long, kNumNodes> simulate_tiers(const double* nu8, const double* phi8,
                                                  long long N, Rng& rng) const;
  double prior_beta_block(const double* x, int i, int j, int c, int part) const;
  double prior_gamma_block(const double* x, int i, int j, int r, int part) const;
  double prior_theta_block(const double* x, int i, int j, int s, int part) const;
  double prior_kappa_block(const double* x, int c, int part) const;
  // N(a; b, (lambda * Omega)^{-1}) with diagonal Omega; b = nullptr means zero mean
  double penalty_mvn_logdens(const double* a, const double* b, double log_lambda) const;

  ModelConfig cfg_;
  FuelHierarchy hier_;
  splines::SplineBasis basis_;
  Eigen::VectorXd penalty_diag_;
  double penalty_logdet_ = 0.0;

  std::vector<std::string> countries_, regions_, supers_, survey_ids_;
  std::vector<int> r_of_c_, s_of_r_;
  std::vector<CompiledRow> rows_;
  std::vector<std::vector<int>> area_rows_;     // [c*2+j]
  std::vector<std::vector<int>> overall_rows_;  // [c]
  std::vector<std::vector<int>> survey_rows_;   // [survey]
  std::vector<ImputeGroup> impute_groups_;

  ParamIndex idx_;
  std::vector<BlockSpec> blocks_;
  std::vector<std::string> names_;
  std::vector<EmitTransform> emits_;

  std::array<int, kNumConditionals> cond_node_;  // conditional -> node id
  std::array<int, kNumNodes> cond_of_node_;      // node id -> conditional or -1
};

}  // namespace fueltrends::model
