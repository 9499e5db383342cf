#include "fueltrends/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fueltrends/io.hpp"

namespace fueltrends::data {

namespace {

constexpr double kSumTol = 1e-6;

std::string row_ctx(const io::Csv& csv, size_t r) {
  return csv.path + ":" + std::to_string(csv.line_of_row(r));
}

std::set<std::string> split_flags(const std::string& s) {
  std::set<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ';')) {
    if (!cur.empty()) out.insert(cur);
  }
  return out;
}

std::string join_flags(const std::set<std::string>& flags) {
  std::string out;
  for (const auto& f : flags) {
    if (!out.empty()) out += ';';
    out += f;
  }
  return out;
}

// Floor with a one-nanocount guard so decimal proportions that hit an exact
// multiple of 1/N are not knocked down a count by representation noise.
long long guarded_floor(double y) { return static_cast<long long>(std::floor(y + 1e-9)); }

double sum_present(const SurveyRecord& rec, const std::vector<Node>& nodes, int* n_present) {
  double s = 0.0;
  int c = 0;
  for (Node n : nodes) {
    if (auto v = rec.prop[static_cast<int>(n)]) {
      s += *v;
      ++c;
    }
  }
  if (n_present) *n_present = c;
  return s;
}

void validate_record(const SurveyRecord& rec, const std::string& ctx) {
  const auto& h = FuelHierarchy::standard();
  for (int i = 0; i < kNumNodes; ++i) {
    if (rec.prop[i] && (*rec.prop[i] < 0.0 || *rec.prop[i] > 1.0)) {
      throw std::runtime_error(ctx + ": proportion out of [0,1] for " +
                               node_name(static_cast<Node>(i)) + ": " + io::fmt(*rec.prop[i]));
    }
  }
  if (rec.nonresponse < 0.0 || rec.nonresponse > 1.0) {
    throw std::runtime_error(ctx + ": nonresponse out of [0,1]: " + io::fmt(rec.nonresponse));
  }
  if (rec.respondent_total && *rec.respondent_total <= 0) {
    throw std::runtime_error(ctx + ": total must be positive");
  }
  for (int t = 0; t < kNumTiers; ++t) {
    double s = sum_present(rec, h.tiers[t], nullptr);
    if (s > 1.0 + 1e-9) {
      throw std::runtime_error(ctx + ": proportions in one tier sum to " + io::fmt(s) + " > 1");
    }
  }
  // reported categories plus non-response cannot exceed the whole sample,
  // and a fully reported top tier must account for it exactly
  int n_top = 0;
  double top = sum_present(rec, h.tiers[0], &n_top);
  if (top + rec.nonresponse > 1.0 + kSumTol) {
    throw std::runtime_error(ctx + ": top-tier proportions plus nonresponse sum to " +
                             io::fmt(top + rec.nonresponse) + " > 1");
  }
  if (n_top == static_cast<int>(h.tiers[0].size()) &&
      std::fabs(top + rec.nonresponse - 1.0) > kSumTol) {
    throw std::runtime_error(ctx + ": fully reported top tier plus nonresponse sums to " +
                             io::fmt(top + rec.nonresponse) + ", expected 1");
  }
  // children must stay inside a reported parent; a full set must match it
  struct ParentCheck {
    Node parent;
    std::vector<Node> children;
  };
  const std::vector<ParentCheck> checks = {
      {Node::biomass, {Node::wood, Node::cropwaste, Node::dung}},
      {Node::solid, {Node::biomass, Node::charcoal, Node::coal}},
      {Node::solid,
       {Node::wood, Node::cropwaste, Node::dung, Node::charcoal, Node::coal}},
  };
  for (const auto& chk : checks) {
    auto parent = rec.prop[static_cast<int>(chk.parent)];
    if (!parent) continue;
    if (chk.children.size() == 5 && rec.prop[static_cast<int>(Node::biomass)]) {
      continue;  // direct biomass check already covers this
    }
    int n_child = 0;
    double s = sum_present(rec, chk.children, &n_child);
    if (s > *parent + kSumTol) {
      throw std::runtime_error(ctx + ": children of " + node_name(chk.parent) + " sum to " +
                               io::fmt(s) + " > parent " + io::fmt(*parent));
    }
    if (n_child == static_cast<int>(chk.children.size()) && std::fabs(s - *parent) > kSumTol) {
      throw std::runtime_error(ctx + ": children of " + node_name(chk.parent) + " sum to " +
                               io::fmt(s) + ", parent reports " + io::fmt(*parent));
    }
  }
}

}  // namespace

const std::vector<std::string> kSurveyHeader = {
    "survey_id", "country",  "year", "area",        "wood",   "cropwaste",
    "dung",      "charcoal", "coal", "biomass",     "solid",  "kerosene",
    "gas",       "electricity", "others", "nonresponse", "total", "flags"};

std::vector<SurveyRecord> load_surveys(const std::string& path, int year_lo, int year_hi) {
  io::Csv csv = io::read_csv(path);
  io::expect_header(csv, kSurveyHeader);
  std::vector<SurveyRecord> out;
  out.reserve(csv.rows.size());
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string ctx = row_ctx(csv, r);
    SurveyRecord rec;
    rec.survey_id = row[0];
    rec.country = row[1];
    if (rec.survey_id.empty()) throw std::runtime_error(ctx + ": empty survey_id");
    if (rec.country.empty()) throw std::runtime_error(ctx + ": empty country");
    rec.year = static_cast<int>(io::parse_int(row[2], ctx + ": year"));
    if (rec.year < year_lo || rec.year > year_hi) {
      throw std::runtime_error(ctx + ": year " + std::to_string(rec.year) + " outside [" +
                               std::to_string(year_lo) + "," + std::to_string(year_hi) + "]");
    }
    try {
      rec.area = parse_area(row[3]);
    } catch (const std::exception& e) {
      throw std::runtime_error(ctx + ": " + e.what());
    }
    for (int i = 0; i < kNumNodes; ++i) {
      const std::string& cell = row[4 + i];
      if (!cell.empty()) {
        rec.prop[i] = io::parse_double(cell, ctx + ": " + kSurveyHeader[4 + i]);
      }
    }
    rec.nonresponse = row[15].empty() ? 0.0 : io::parse_double(row[15], ctx + ": nonresponse");
    if (!row[16].empty()) rec.respondent_total = io::parse_int(row[16], ctx + ": total");
    rec.flags = split_flags(row[17]);
    validate_record(rec, ctx);
    out.push_back(std::move(rec));
  }
  return out;
}

void write_surveys(const std::string& path, const std::vector<SurveyRecord>& records) {
  std::ostringstream os;
  for (size_t i = 0; i < kSurveyHeader.size(); ++i) os << (i ? "," : "") << kSurveyHeader[i];
  os << "\n";
  for (const auto& rec : records) {
    os << rec.survey_id << ',' << rec.country << ',' << rec.year << ',' << area_name(rec.area);
    for (int i = 0; i < kNumNodes; ++i) {
      os << ',';
      if (rec.prop[i]) os << io::fmt_exact(*rec.prop[i]);
    }
    os << ',' << io::fmt_exact(rec.nonresponse) << ',';
    if (rec.respondent_total) os << *rec.respondent_total;
    os << ',' << join_flags(rec.flags) << "\n";
  }
  io::write_text(path, os.str());
}

Selection select_surveys(const std::vector<SurveyRecord>& records) {
  static const Node kIndividual[] = {Node::wood,     Node::cropwaste, Node::dung,
                                     Node::charcoal, Node::coal,      Node::kerosene,
                                     Node::gas,      Node::electricity};
  Selection sel;
  for (const auto& rec : records) {
    bool any_individual = false;
    for (Node n : kIndividual) {
      if (rec.prop[static_cast<int>(n)]) any_individual = true;
    }
    if (!any_individual) {
      sel.excluded.push_back({rec, "a"});
    } else if (rec.nonresponse > 0.15) {
      sel.excluded.push_back({rec, "b"});
    } else if (rec.flags.count("unsuitable-for-modelling") || rec.flags.count("unsuitable")) {
      sel.excluded.push_back({rec, "c"});
    } else {
      sel.kept.push_back(rec);
    }
  }
  return sel;
}

ObservationCounts to_counts(const SurveyRecord& rec, long long N) {
  if (N <= 0) throw std::runtime_error("to_counts: N must be positive");
  if (rec.nonresponse >= 1.0) {
    throw std::runtime_error("to_counts: nonresponse >= 1 in survey " + rec.survey_id);
  }
  const auto& h = FuelHierarchy::standard();
  const double scale = 1.0 / (1.0 - rec.nonresponse);
  const int iSolid = static_cast<int>(Node::solid);
  const int iBiomass = static_cast<int>(Node::biomass);

  bool reported[kNumNodes];
  long long floor_of[kNumNodes];
  bool any = false;
  for (int i = 0; i < kNumNodes; ++i) {
    reported[i] = rec.prop[i].has_value();
    floor_of[i] = reported[i] ? guarded_floor(static_cast<double>(N) * *rec.prop[i] * scale) : 0;
    any = any || reported[i];
  }
  if (!any) throw std::runtime_error("to_counts: no reported categories in survey " + rec.survey_id);

  ObservationCounts oc;
  oc.N = N;
  oc.status.fill(CountStatus::unused);
  oc.v.fill(0);
  oc.min_count.fill(0);

  // tier inclusion: a tier carries likelihood terms when it has data of its
  // own or a deeper tier does (the split below pins part of its total)
  bool has_data[kNumTiers];
  for (int t = 0; t < kNumTiers; ++t) {
    has_data[t] = false;
    for (Node n : h.tiers[t]) has_data[t] = has_data[t] || reported[static_cast<int>(n)];
  }
  bool included[kNumTiers];
  included[2] = has_data[2];
  included[1] = has_data[1] || included[2];
  included[0] = has_data[0] || included[1];
  for (int t = 0; t < kNumTiers; ++t) oc.tiers[t].included = included[t];

  // fully reported splits determine their parent count exactly
  bool derived[kNumNodes] = {};
  long long derived_value[kNumNodes] = {};
  if (reported[static_cast<int>(Node::wood)] && reported[static_cast<int>(Node::cropwaste)] &&
      reported[static_cast<int>(Node::dung)]) {
    derived[iBiomass] = true;
    derived_value[iBiomass] = floor_of[static_cast<int>(Node::wood)] +
                              floor_of[static_cast<int>(Node::cropwaste)] +
                              floor_of[static_cast<int>(Node::dung)];
  }
  if ((reported[iBiomass] || derived[iBiomass]) && reported[static_cast<int>(Node::charcoal)] &&
      reported[static_cast<int>(Node::coal)]) {
    derived[iSolid] = true;
    derived_value[iSolid] = (derived[iBiomass] ? derived_value[iBiomass] : floor_of[iBiomass]) +
                            floor_of[static_cast<int>(Node::charcoal)] +
                            floor_of[static_cast<int>(Node::coal)];
  }

  auto pinned_value = [&](int i) { return derived[i] ? derived_value[i] : floor_of[i]; };

  // minimum admissible count for an unpinned parent: the pinned mass below it
  auto fill_min_counts = [&]() {
    if (included[2]) {
      long long m = 0;
      for (Node n : h.tiers[2]) {
        int i = static_cast<int>(n);
        if (reported[i]) m += floor_of[i];
      }
      oc.min_count[iBiomass] = m;
    }
    if (included[1]) {
      long long m = 0;
      for (Node n : h.tiers[1]) {
        int i = static_cast<int>(n);
        if (reported[i] || derived[i]) {
          m += pinned_value(i);
        } else if (n == Node::biomass) {
          m += oc.min_count[iBiomass];
        }
      }
      oc.min_count[iSolid] = m;
    }
  };
  fill_min_counts();

  // assemble counts top to bottom; free members start at their minimum plus
  // an even share of the tier's slack
  for (int t = 0; t < kNumTiers; ++t) {
    if (!included[t]) continue;
    const auto& members = h.tiers[t];
    const Node final_node = members.back();
    const int parent = t == 0 ? -1 : static_cast<int>(h.parent(static_cast<Tier>(t)));
    // the parent tier is assembled first, so its status is already settled
    const bool total_fixed = t == 0 || oc.status[parent] == CountStatus::fixed;
    const long long total = t == 0 ? N : oc.v[parent];

    bool nonfinal_missing = false;
    for (Node n : members) {
      int i = static_cast<int>(n);
      if (n != final_node && !reported[i] && !derived[i]) nonfinal_missing = true;
    }
    long long fixed_sum = 0;
    std::vector<Node> free_nodes;
    for (Node n : members) {
      int i = static_cast<int>(n);
      // a reported final is honored as data only while the tier is still
      // incomplete; once every other member is pinned it reverts to the
      // remainder so the tier total is met exactly
      bool pinned = (reported[i] || derived[i]) && (n != final_node || nonfinal_missing);
      if (pinned) {
        oc.status[i] = CountStatus::fixed;
        oc.v[i] = pinned_value(i);
        fixed_sum += oc.v[i];
      } else {
        free_nodes.push_back(n);
      }
    }
    long long slack = total - fixed_sum;
    long long min_sum = 0;
    for (Node n : free_nodes) min_sum += oc.min_count[static_cast<int>(n)];
    if (slack < min_sum) {
      throw std::runtime_error("to_counts: pinned counts exceed the available total in survey " +
                               rec.survey_id + " (tier " + std::to_string(t) + ")");
    }
    if (free_nodes.empty()) {
      if (slack != 0) {
        throw std::runtime_error("to_counts: fully pinned tier misses its total in survey " +
                                 rec.survey_id);
      }
    } else if (free_nodes.size() == 1 && total_fixed) {
      int i = static_cast<int>(free_nodes.front());
      oc.status[i] = CountStatus::fixed;
      oc.v[i] = slack;
    } else {
      long long rem = slack - min_sum;
      long long share = rem / static_cast<long long>(free_nodes.size());
      long long extra = rem % static_cast<long long>(free_nodes.size());
      for (size_t j = 0; j < free_nodes.size(); ++j) {
        int i = static_cast<int>(free_nodes[j]);
        oc.status[i] = CountStatus::free;
        oc.v[i] = oc.min_count[i] + share + (static_cast<long long>(j) < extra ? 1 : 0);
        oc.tiers[t].free_nodes.push_back(free_nodes[j]);
      }
    }
  }
  return oc;
}

std::vector<long long> to_counts_simple(const std::vector<double>& x, long long N) {
  if (x.empty()) throw std::runtime_error("to_counts_simple: empty composition");
  if (N <= 0) throw std::runtime_error("to_counts_simple: N must be positive");
  std::vector<long long> v(x.size());
  long long used = 0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    if (x[i] < 0.0 || x[i] > 1.0) {
      throw std::runtime_error("to_counts_simple: proportion out of [0,1]");
    }
    v[i] = guarded_floor(static_cast<double>(N) * x[i]);
    used += v[i];
  }
  if (x.back() < 0.0 || x.back() > 1.0) {
    throw std::runtime_error("to_counts_simple: proportion out of [0,1]");
  }
  if (used > N) throw std::runtime_error("to_counts_simple: proportions overfill the total");
  v.back() = N - used;
  return v;
}

void UnUrbanSeries::add(const std::string& country, int year, double proportion) {
  double p = std::min(1.0 - 1e-6, std::max(1e-6, proportion));
  auto& pts = pts_[country];
  auto it = std::lower_bound(pts.begin(), pts.end(), year,
                             [](const std::pair<int, double>& a, int y) { return a.first < y; });
  if (it != pts.end() && it->first == year) {
    throw std::runtime_error("duplicate urban proportion for " + country + " year " +
                             std::to_string(year));
  }
  pts.insert(it, {year, p});
}

double UnUrbanSeries::value(const std::string& country, double year) const {
  auto it = pts_.find(country);
  if (it == pts_.end() || it->second.empty()) {
    throw std::runtime_error("no urban proportion data for country " + country);
  }
  const auto& pts = it->second;
  if (year <= pts.front().first) return pts.front().second;
  if (year >= pts.back().first) return pts.back().second;
  auto hi = std::lower_bound(pts.begin(), pts.end(), year,
                             [](const std::pair<int, double>& a, double y) { return a.first < y; });
  auto lo = hi - 1;
  double w = (year - lo->first) / static_cast<double>(hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

void UnUrbanSeries::require(const std::set<std::string>& countries) const {
  std::string missing;
  for (const auto& c : countries) {
    if (!pts_.count(c)) missing += (missing.empty() ? "" : ", ") + c;
  }
  if (!missing.empty()) {
    throw std::runtime_error("urban proportion series missing for: " + missing);
  }
}

UnUrbanSeries load_un_urban(const std::string& path) {
  io::Csv csv = io::read_csv(path);
  io::expect_header(csv, {"country", "year", "urban_proportion"});
  UnUrbanSeries series;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string ctx = row_ctx(csv, r);
    if (row[0].empty()) throw std::runtime_error(ctx + ": empty country");
    int year = static_cast<int>(io::parse_int(row[1], ctx + ": year"));
    double p = io::parse_double(row[2], ctx + ": urban_proportion");
    if (p < 0.0 || p > 1.0) {
      throw std::runtime_error(ctx + ": urban_proportion out of [0,1]: " + io::fmt(p));
    }
    try {
      series.add(row[0], year, p);
    } catch (const std::exception& e) {
      throw std::runtime_error(ctx + ": " + e.what());
    }
  }
  return series;
}

void write_un_urban(const std::string& path, const UnUrbanSeries& series) {
  std::ostringstream os;
  os << "country,year,urban_proportion\n";
  for (const auto& [country, pts] : series.points()) {
    for (const auto& [year, p] : pts) {
      os << country << ',' << year << ',' << io::fmt_exact(p) << "\n";
    }
  }
  io::write_text(path, os.str());
}

const std::pair<std::string, std::string>& RegionMap::of(const std::string& country) const {
  auto it = entries.find(country);
  if (it == entries.end()) throw std::runtime_error("country not in region map: " + country);
  return it->second;
}

void RegionMap::require(const std::set<std::string>& countries) const {
  std::string missing;
  for (const auto& c : countries) {
    if (!entries.count(c)) missing += (missing.empty() ? "" : ", ") + c;
  }
  if (!missing.empty()) throw std::runtime_error("region map missing for: " + missing);
}

RegionMap load_region_map(const std::string& path) {
  io::Csv csv = io::read_csv(path);
  io::expect_header(csv, {"country", "region", "super_region"});
  RegionMap map;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string ctx = row_ctx(csv, r);
    if (row[0].empty() || row[1].empty() || row[2].empty()) {
      throw std::runtime_error(ctx + ": empty field in region map");
    }
    if (map.entries.count(row[0])) {
      throw std::runtime_error(ctx + ": duplicate region entry for " + row[0]);
    }
    map.entries[row[0]] = {row[1], row[2]};
  }
  return map;
}

void write_region_map(const std::string& path, const RegionMap& map) {
  std::ostringstream os;
  os << "country,region,super_region\n";
  for (const auto& [country, rs] : map.entries) {
    os << country << ',' << rs.first << ',' << rs.second << "\n";
  }
  io::write_text(path, os.str());
}

}  // namespace fueltrends::data
