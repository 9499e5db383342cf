#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fueltrends/hierarchy.hpp"

namespace fueltrends::data {

// One survey x area row. Proportions are absolute household shares; absent
// cells are unreported values to be treated as latent by the model.
struct SurveyRecord {
  std::string survey_id;
  std::string country;
  int year = 0;
  Area area = Area::urban;
  std::array<std::optional<double>, kNumNodes> prop;
  double nonresponse = 0.0;  // combined unlisted-fuel / no-cooking / non-response mass
  std::optional<long long> respondent_total;
  std::set<std::string> flags;
};

extern const std::vector<std::string> kSurveyHeader;

// year_lo/year_hi bound the acceptable survey years (inclusive).
std::vector<SurveyRecord> load_surveys(const std::string& path, int year_lo, int year_hi);
void write_surveys(const std::string& path, const std::vector<SurveyRecord>& records);

struct Exclusion {
  SurveyRecord record;
  std::string rule;  // "a" solid-aggregate-only, "b" non-response over 15%, "c" flagged
};

struct Selection {
  std::vector<SurveyRecord> kept;
  std::vector<Exclusion> excluded;
};

// Order-preserving filter implementing the three exclusion rules.
Selection select_surveys(const std::vector<SurveyRecord>& records);

// Count layout for one record at denominator N. Non-final reported categories
// are pinned at floor(N * x); each tier's last free slot absorbs remainders.
// Unreported categories inside a tier that carries data stay free and are
// imputed by the sampler; trailing tiers with no data are left out entirely.
enum class CountStatus : unsigned char { fixed, free, unused };

struct TierLayout {
  bool included = false;          // tier contributes likelihood terms
  std::vector<Node> free_nodes;   // free members in tier order (imputation group)
};

struct ObservationCounts {
  long long N = 0;
  std::array<long long, kNumNodes> v{};
  std::array<CountStatus, kNumNodes> status{};
  // smallest admissible count per node (sum of pinned descendants)
  std::array<long long, kNumNodes> min_count{};
  std::array<TierLayout, kNumTiers> tiers;
};

// Floor-based conversion of one record's renormalized proportions to counts.
// Throws std::runtime_error on internally inconsistent rows.
ObservationCounts to_counts(const SurveyRecord& rec, long long N);

// Plain composition conversion: floor(N * x_i) with the remainder assigned to
// the final category. Used by the simulation experiment.
std::vector<long long> to_counts_simple(const std::vector<double>& x, long long N);

// Piecewise-linear urban-share series per country, clamped to
// [1e-6, 1 - 1e-6]; constant extension beyond the observed years.
class UnUrbanSeries {
 public:
  void add(const std::string& country, int year, double proportion);
  double value(const std::string& country, double year) const;
  void require(const std::set<std::string>& countries) const;
  const std::map<std::string, std::vector<std::pair<int, double>>>& points() const {
    return pts_;
  }

 private:
  std::map<std::string, std::vector<std::pair<int, double>>> pts_;
};

UnUrbanSeries load_un_urban(const std::string& path);
void write_un_urban(const std::string& path, const UnUrbanSeries& series);

struct RegionMap {
  // country -> (region, super-region)
  std::map<std::string, std::pair<std::string, std::string>> entries;

  const std::pair<std::string, std::string>& of(const std::string& country) const;
  void require(const std::set<std::string>& countries) const;
};

RegionMap load_region_map(const std::string& path);
void write_region_map(const std::string& path, const RegionMap& map);

}  // namespace fueltrends::data
