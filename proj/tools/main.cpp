#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fueltrends/data.hpp"
#include "fueltrends/engine.hpp"
#include "fueltrends/hierarchy.hpp"
#include "fueltrends/io.hpp"
#include "fueltrends/mcmc.hpp"
#include "fueltrends/model.hpp"
#include "fueltrends/rng.hpp"
#include "fueltrends/simexp.hpp"
#include "fueltrends/special.hpp"
#include "fueltrends/splines.hpp"
#include "fueltrends/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fueltrends;

namespace {

constexpr std::uint64_t kPredictSeedTag = 0x9dce;
constexpr std::uint64_t kCheckSeedTag = 0xc4ec;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string csv_quote(const std::string& s) { return "\"" + s + "\""; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------
// config

struct CliConfig {
  std::string surveys_path, un_urban_path, regions_path;
  int year_lo = 0, year_hi = 0;
  model::ModelConfig model;
  mcmc::McmcConfig mcmc;
  Exec exec = Exec::serial;
  double check_level = 0.95;
  int check_stride = 1;
};

json hierarchy_json() {
  const auto& hier = FuelHierarchy::standard();
  const char* tier_name[kNumTiers] = {"top", "mid", "lower"};
  json h;
  for (int t = 0; t < kNumTiers; ++t) {
    json members = json::array();
    for (Node n : hier.tiers[t]) members.push_back(node_name(n));
    h[tier_name[t]] = members;
  }
  return h;
}

json default_config_json(int year_lo, int year_hi, int K, long long N) {
  json j;
  j["data"] = {{"surveys", "surveys.csv"}, {"un_urban", "un_urban.csv"},
               {"regions", "regions.csv"}, {"year_lo", year_lo},
               {"year_hi", year_hi}};
  j["model"] = {{"K", K},
                {"N", N},
                {"coef_prior_sd", 10.0},
                {"sigma_prior_sd", 10.0},
                {"rho_prior_a", 9.0},
                {"rho_prior_b", 1.0},
                {"nu_eps", 1e-12}};
  j["hierarchy"] = hierarchy_json();
  j["mcmc"] = {{"chains", 4},     {"iterations", 8000},    {"burn_in", 4000},
               {"thin", 16},      {"seed", 1},             {"target_scalar", 0.44},
               {"target_vector", 0.234},                   {"adapt_interval", 50},
               {"init_retries", 50},                       {"exec", "serial"}};
  j["check"] = {{"level", 0.95}, {"draw_stride", 1}};
  return j;
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return path.lexically_normal().string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

CliConfig load_config(const std::string& path) {
  json j = io::read_json(path);
  std::string dir = fs::absolute(fs::path(path)).parent_path().string();
  CliConfig cfg;
  const json& d = j.at("data");
  cfg.surveys_path = resolve_path(dir, d.at("surveys").get<std::string>());
  cfg.un_urban_path = resolve_path(dir, d.at("un_urban").get<std::string>());
  cfg.regions_path = resolve_path(dir, d.at("regions").get<std::string>());
  cfg.year_lo = d.at("year_lo").get<int>();
  cfg.year_hi = d.at("year_hi").get<int>();
  if (cfg.year_hi < cfg.year_lo) throw std::runtime_error("config: bad year range");
  for (int y = cfg.year_lo; y <= cfg.year_hi; ++y) cfg.model.years.push_back(y);

  const json& m = j.at("model");
  cfg.model.K = m.at("K").get<int>();
  cfg.model.N = m.at("N").get<long long>();
  cfg.model.coef_prior_sd = m.at("coef_prior_sd").get<double>();
  cfg.model.sigma_prior_sd = m.at("sigma_prior_sd").get<double>();
  cfg.model.rho_a = m.at("rho_prior_a").get<double>();
  cfg.model.rho_b = m.at("rho_prior_b").get<double>();
  cfg.model.nu_eps = m.at("nu_eps").get<double>();

  if (j.at("hierarchy") != hierarchy_json()) {
    throw std::runtime_error("config: hierarchy does not match the built-in fuel tree");
  }

  const json& mc = j.at("mcmc");
  cfg.mcmc.chains = mc.at("chains").get<int>();
  cfg.mcmc.iterations = mc.at("iterations").get<int>();
  cfg.mcmc.burn_in = mc.at("burn_in").get<int>();
  cfg.mcmc.thin = mc.at("thin").get<int>();
  cfg.mcmc.seed = mc.at("seed").get<std::uint64_t>();
  cfg.mcmc.adaptation.target_scalar = mc.at("target_scalar").get<double>();
  cfg.mcmc.adaptation.target_vector = mc.at("target_vector").get<double>();
  cfg.mcmc.adaptation.interval = mc.at("adapt_interval").get<int>();
  cfg.mcmc.init_retries = mc.at("init_retries").get<int>();
  std::string exec = mc.at("exec").get<std::string>();
  if (exec == "serial") {
    cfg.exec = Exec::serial;
  } else if (exec == "openmp") {
    cfg.exec = Exec::openmp;
  } else {
    throw std::runtime_error("config: exec must be serial or openmp");
  }
  cfg.mcmc.validate();

  const json& ck = j.at("check");
  cfg.check_level = ck.at("level").get<double>();
  cfg.check_stride = ck.at("draw_stride").get<int>();
  return cfg;
}

// ---------------------------------------------------------------------------
// manifests

struct OutDir {
  std::string dir;
  std::vector<std::string> files;

  explicit OutDir(std::string d) : dir(std::move(d)) { io::ensure_dir(dir); }

  std::string path(const std::string& name) const { return (fs::path(dir) / name).string(); }

  void write(const std::string& name, const std::string& content) {
    io::write_text(path(name), content);
    files.push_back(name);
  }

  void write_json_file(const std::string& name, const json& j) {
    io::write_json(path(name), j);
    files.push_back(name);
  }
};

// inputs: path -> bytes hash; timestamps record input file mtimes so a rerun
// on untouched inputs reproduces the manifest byte for byte
int finish_manifest(OutDir& out, const std::string& command, std::uint64_t seed,
                    const std::vector<std::string>& input_paths) {
  json inputs = json::object();
  json stamps = json::object();
  std::string all_data;
  for (const auto& p : input_paths) {
    std::string bytes = read_file(p);
    inputs[p] = fnv1a_hex(bytes);
    all_data += bytes;
    stamps[p] = static_cast<long long>(fs::last_write_time(p).time_since_epoch().count());
  }
  json m;
  m["command"] = command;
  m["seed"] = seed;
  m["inputs"] = inputs;
  m["data_hash"] = fnv1a_hex(all_data);
  m["timestamps"] = stamps;
  std::sort(out.files.begin(), out.files.end());
  m["outputs"] = out.files;
  m["outputs"].push_back("manifest.json");
  io::write_json(out.path("manifest.json"), m);

  int missing = 0;
  for (const auto& f : m["outputs"]) {
    if (!fs::exists(out.path(f.get<std::string>()))) {
      std::cerr << "missing output: " << f << "\n";
      ++missing;
    }
  }
  return missing == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// data + draws plumbing

struct LoadedData {
  data::Selection sel;
  data::UnUrbanSeries urban;
  data::RegionMap regions;
};

LoadedData load_data(const CliConfig& cfg) {
  LoadedData d;
  auto all = data::load_surveys(cfg.surveys_path, cfg.year_lo, cfg.year_hi);
  d.sel = data::select_surveys(all);
  if (d.sel.kept.empty()) throw std::runtime_error("no usable surveys after selection");
  d.urban = data::load_un_urban(cfg.un_urban_path);
  d.regions = data::load_region_map(cfg.regions_path);
  return d;
}

void write_draws_csv(OutDir& out, const model::Model& m, const mcmc::PosteriorDraws& draws) {
  const auto& names = m.param_names();
  std::string buf = "parameter,chain,iteration,value\n";
  buf.reserve(64 * names.size() * std::max(1, draws.total_draws()) + 64);
  for (size_t c = 0; c < draws.chains.size(); ++c) {
    const auto& chain = draws.chains[c];
    for (size_t d = 0; d < chain.draws.size(); ++d) {
      const auto& row = chain.draws[d];
      for (size_t p = 0; p < names.size(); ++p) {
        buf += csv_quote(names[p]);
        buf += ',';
        buf += std::to_string(c);
        buf += ',';
        buf += std::to_string(d);
        buf += ',';
        buf += io::fmt(row[p]);
        buf += '\n';
      }
    }
  }
  out.write("draws.csv", buf);
}

mcmc::PosteriorDraws read_draws_csv(const std::string& path,
                                    const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "parameter,chain,iteration,value") {
    throw std::runtime_error(path + ": unexpected draws header");
  }
  mcmc::PosteriorDraws out;
  const size_t P = names.size();
  size_t p = 0;
  std::vector<double> draw(P);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() != '"') throw std::runtime_error(path + ": unquoted parameter name");
    size_t q = line.find('"', 1);
    if (q == std::string::npos) throw std::runtime_error(path + ": bad quoting");
    std::string name = line.substr(1, q - 1);
    auto rest = split(line.substr(q + 2), ',');
    if (rest.size() != 3) throw std::runtime_error(path + ": bad row shape");
    if (name != names[p]) {
      throw std::runtime_error(path + ": parameter order mismatch at " + name);
    }
    size_t chain = std::stoull(rest[0]);
    if (chain >= out.chains.size()) out.chains.resize(chain + 1);
    draw[p] = std::stod(rest[2]);
    if (++p == P) {
      out.chains[chain].draws.push_back(draw);
      p = 0;
    }
  }
  if (p != 0) throw std::runtime_error(path + ": truncated draw");
  if (out.chains.empty() || out.chains[0].draws.empty()) {
    throw std::runtime_error(path + ": no draws");
  }
  for (const auto& c : out.chains) {
    if (c.draws.size() != out.chains[0].draws.size()) {
      throw std::runtime_error(path + ": ragged chains");
    }
  }
  return out;
}

// a fitted run directory: echoed config, manifest, draws
struct DrawsBundle {
  CliConfig cfg;
  LoadedData data;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;  // for downstream manifests
};

DrawsBundle open_draws_dir(const std::string& dir) {
  DrawsBundle b;
  json manifest = io::read_json((fs::path(dir) / "manifest.json").string());
  if (manifest.at("command").get<std::string>() != "fit") {
    throw std::runtime_error(dir + ": not a fit output directory");
  }
  b.seed = manifest.at("seed").get<std::uint64_t>();
  std::string echo = (fs::path(dir) / "config.json").string();
  b.cfg = load_config(echo);
  // the echo's relative data paths point at the original inputs
  for (const auto& [path, hash] : manifest.at("inputs").items()) {
    if (path.ends_with("config.json")) continue;
    b.inputs.push_back(path);
  }
  std::set<std::string> known(b.inputs.begin(), b.inputs.end());
  auto reresolve = [&known, &manifest](std::string& p, const char* what) {
    if (known.count(p)) return;
    for (const auto& k : known) {
      if (fs::path(k).filename() == fs::path(p).filename()) {
        p = k;
        return;
      }
    }
    (void)manifest;
    throw std::runtime_error(std::string("draws dir does not record a ") + what + " input");
  };
  reresolve(b.cfg.surveys_path, "surveys");
  reresolve(b.cfg.un_urban_path, "un_urban");
  reresolve(b.cfg.regions_path, "regions");
  b.data = load_data(b.cfg);
  b.inputs.push_back(echo);
  b.inputs.push_back((fs::path(dir) / "draws.csv").string());
  std::sort(b.inputs.begin(), b.inputs.end());
  return b;
}

engine::FitResult as_fit_result(const model::Model& m, mcmc::PosteriorDraws draws) {
  engine::FitResult fr;
  fr.draws = std::move(draws);
  fr.names = m.param_names();
  fr.transforms = m.emit_transforms();
  return fr;
}

std::string csv_quantiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return io::fmt(quantile_sorted(v, 0.025)) + "," + io::fmt(quantile_sorted(v, 0.5)) + "," +
         io::fmt(quantile_sorted(v, 0.975));
}

// ---------------------------------------------------------------------------
// verbs

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 1;
  synth::CorpusSpec spec;
};

int cmd_synth(const SynthArgs& a) {
  OutDir out(a.out);
  Rng rng = make_rng(a.seed, 0);
  synth::Corpus corpus = synth::synthesize_corpus(a.spec, rng);
  const auto& tr = corpus.truth;

  data::write_surveys(out.path("surveys.csv"), corpus.surveys);
  out.files.push_back("surveys.csv");
  data::write_un_urban(out.path("un_urban.csv"), tr.urban);
  out.files.push_back("un_urban.csv");
  data::write_region_map(out.path("regions.csv"), tr.regions);
  out.files.push_back("regions.csv");
  out.write_json_file("config.json",
                      default_config_json(a.spec.year_lo, a.spec.year_hi, a.spec.K, a.spec.N));

  const auto& hier = FuelHierarchy::standard();
  std::string nu = "fuel,area,country,year,nu\n";
  for (int i = 0; i < kNumConditionals; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (size_t c = 0; c < tr.countries.size(); ++c) {
        for (int year : tr.years) {
          nu += std::string(node_name(hier.conditionals[i])) + "," +
                (j == 0 ? "urban" : "rural") + "," + tr.countries[c] + "," +
                std::to_string(year) + "," +
                io::fmt(tr.nu_value(i, j, static_cast<int>(c), year)) + "\n";
        }
      }
    }
  }
  out.write("truth_nu.csv", nu);

  std::string outliers = "survey_id\n";
  for (const auto& id : tr.outlier_surveys) outliers += id + "\n";
  out.write("truth_outliers.csv", outliers);

  return finish_manifest(out, "synth", a.seed, {});
}

int cmd_fit(const std::string& config_path, const std::string& out_dir, bool seed_set,
            std::uint64_t seed) {
  CliConfig cfg = load_config(config_path);
  if (seed_set) cfg.mcmc.seed = seed;
  LoadedData d = load_data(cfg);
  model::Model m(cfg.model, d.sel.kept, d.urban, d.regions);

  engine::FitOptions opts;
  opts.exec = cfg.exec;
  engine::FitResult fit = engine::fit_model(m, cfg.mcmc, opts);

  OutDir out(out_dir);
  out.write("config.json", read_file(config_path));  // byte-for-byte echo
  write_draws_csv(out, m, fit.draws);

  // pooled summaries with a split-chain view only when there are >= 2 chains
  const auto& names = m.param_names();
  const int n_chains = static_cast<int>(fit.draws.chains.size());
  std::string params = "parameter,mean,sd,q2.5,q50,q97.5,psrf\n";
  for (size_t p = 0; p < names.size(); ++p) {
    std::vector<double> pooled;
    std::vector<std::vector<double>> traces;
    for (const auto& chain : fit.draws.chains) {
      std::vector<double> t;
      for (const auto& row : chain.draws) t.push_back(row[p]);
      pooled.insert(pooled.end(), t.begin(), t.end());
      traces.push_back(std::move(t));
    }
    double mean = 0.0;
    for (double x : pooled) mean += x;
    mean /= static_cast<double>(pooled.size());
    double ss = 0.0;
    for (double x : pooled) ss += (x - mean) * (x - mean);
    double sd = pooled.size() > 1 ? std::sqrt(ss / (pooled.size() - 1.0)) : 0.0;
    params += csv_quote(names[p]) + "," + io::fmt(mean) + "," + io::fmt(sd) + "," +
              csv_quantiles(pooled) + ",";
    if (n_chains >= 2) params += io::fmt(mcmc::psrf(traces));
    params += "\n";
  }
  out.write("parameters.csv", params);

  std::string acc = "block,kind,i,j,g,d,acceptance\n";
  static const char* kind_names[] = {
      "beta_coef",   "loglam_beta", "gamma_coef", "loglam_gamma", "theta_coef",
      "loglam_theta", "logphi",     "kappa_coef", "loglam_kappa", "ups_beta",
      "ups_gamma",   "ups_phi",     "ups_kappa",  "sig_beta",     "sig_gamma",
      "sig_phi",     "sig_kappa",   "rho"};
  for (size_t k = 0; k < fit.sampled_blocks.size(); ++k) {
    const auto& b = m.blocks()[fit.sampled_blocks[k]];
    acc += std::to_string(fit.sampled_blocks[k]) + "," +
           kind_names[static_cast<int>(b.kind)] + "," + std::to_string(b.i) + "," +
           std::to_string(b.j) + "," + std::to_string(b.g) + "," + std::to_string(b.d) + "," +
           io::fmt(fit.block_acceptance[k]) + "\n";
  }
  acc += "-1,imputation,-1,-1,-1,-1," + io::fmt(fit.impute_acceptance) + "\n";
  out.write("acceptance_rates.csv", acc);

  std::string rho = "survey_id,mean_rho\n";
  for (const auto& [id, r] : engine::rho_table(m, fit.draws)) {
    rho += id + "," + io::fmt(r) + "\n";
  }
  out.write("rho_table.csv", rho);

  std::string excl = "survey_id,country,year,area,rule\n";
  for (const auto& e : d.sel.excluded) {
    excl += e.record.survey_id + "," + e.record.country + "," +
            std::to_string(e.record.year) + "," + area_name(e.record.area) + "," + e.rule +
            "\n";
  }
  out.write("exclusions.csv", excl);

  return finish_manifest(out, "fit", cfg.mcmc.seed,
                         {fs::absolute(config_path).string(), cfg.surveys_path,
                          cfg.un_urban_path, cfg.regions_path});
}

int cmd_predict(const std::string& draws_dir, const std::string& out_dir,
                const std::string& countries_arg, const std::string& years_arg,
                bool un_offsets_only, bool with_variability, bool seed_set,
                std::uint64_t seed) {
  DrawsBundle b = open_draws_dir(draws_dir);
  model::Model m(b.cfg.model, b.data.sel.kept, b.data.urban, b.data.regions);
  engine::FitResult fit =
      as_fit_result(m, read_draws_csv((fs::path(draws_dir) / "draws.csv").string(),
                                      m.param_names()));

  std::vector<std::string> countries = m.countries();
  if (!countries_arg.empty()) countries = split(countries_arg, ',');
  std::vector<double> years;
  if (years_arg.empty()) {
    for (int y : m.basis().years) years.push_back(y);
  } else {
    for (const auto& tok : split(years_arg, ',')) years.push_back(std::stod(tok));
  }
  std::uint64_t rep_seed = seed_set ? seed : derive_seed(b.seed, kPredictSeedTag);

  std::string csv = "country,area,fuel,year,q2.5,q50,q97.5";
  if (with_variability) csv += ",rep_q2.5,rep_q50,rep_q97.5";
  csv += "\n";
  for (const auto& country : countries) {
    for (Area area : {Area::urban, Area::rural, Area::overall}) {
      engine::PredictRequest req;
      req.country = country;
      req.area = area;
      req.years = years;
      req.survey_variability = with_variability;
      req.un_offsets_only = un_offsets_only;
      engine::PredictTable table = engine::predict(m, fit, b.data.urban, req, rep_seed);
      for (const auto& row : table.rows) {
        csv += country + "," + area_name(area) + "," +
               node_name(static_cast<Node>(row.node)) + "," + io::fmt(row.year) + "," +
               io::fmt(row.lo) + "," + io::fmt(row.median) + "," + io::fmt(row.hi);
        if (with_variability) {
          csv += "," + io::fmt(row.rep_lo) + "," + io::fmt(row.rep_median) + "," +
                 io::fmt(row.rep_hi);
        }
        csv += "\n";
      }
    }
  }
  OutDir out(out_dir);
  out.write("predictions.csv", csv);
  return finish_manifest(out, "predict", rep_seed, b.inputs);
}

int cmd_check(const std::string& draws_dir, const std::string& out_dir, bool seed_set,
              std::uint64_t seed) {
  DrawsBundle b = open_draws_dir(draws_dir);
  model::Model m(b.cfg.model, b.data.sel.kept, b.data.urban, b.data.regions);
  engine::FitResult fit =
      as_fit_result(m, read_draws_csv((fs::path(draws_dir) / "draws.csv").string(),
                                      m.param_names()));
  std::uint64_t rep_seed = seed_set ? seed : derive_seed(b.seed, kCheckSeedTag);
  engine::ReplicateSet reps =
      engine::posterior_replicates(m, fit, rep_seed, b.cfg.check_stride, b.cfg.exec);
  engine::CoverageReport report = engine::coverage_report(m, reps, b.cfg.check_level);

  OutDir out(out_dir);
  std::string cov = "fuel,area,n_cells,coverage,mean_observed,mean_replicate\n";
  for (const auto& p : report.panels) {
    cov += std::string(node_name(static_cast<Node>(p.node))) + "," + area_name(p.area) + "," +
           std::to_string(p.n_cells) + "," + io::fmt(p.coverage) + "," +
           io::fmt(p.mean_observed) + "," + io::fmt(p.mean_replicate) + "\n";
  }
  cov += "all,all," + std::to_string(report.n_cells) + "," + io::fmt(report.overall) + ",,\n";
  out.write("coverage.csv", cov);

  const double lo_q = (1.0 - b.cfg.check_level) / 2.0;
  std::string sc = "survey_id,country,year,area,fuel,observed,replicate_mean,rep_lo,rep_hi\n";
  for (size_t i = 0; i < reps.cells.size(); ++i) {
    const auto& cell = reps.cells[i];
    const auto& row = m.rows()[cell.row];
    std::vector<double> shares = reps.shares[i];
    std::sort(shares.begin(), shares.end());
    double mean = 0.0;
    for (double s : shares) mean += s;
    mean /= static_cast<double>(shares.size());
    sc += row.survey_id + "," + m.countries()[row.country] + "," +
          std::to_string(m.basis().years[row.year_idx]) + "," + area_name(row.area) + "," +
          node_name(static_cast<Node>(cell.node)) + "," + io::fmt(cell.observed) + "," +
          io::fmt(mean) + "," + io::fmt(quantile_sorted(shares, lo_q)) + "," +
          io::fmt(quantile_sorted(shares, 1.0 - lo_q)) + "\n";
  }
  out.write("replicates.csv", sc);
  return finish_manifest(out, "check", rep_seed, b.inputs);
}

int cmd_forecast(const std::string& config_path, const std::string& out_dir, int cutoff_year,
                 int horizon, bool seed_set, std::uint64_t seed) {
  CliConfig cfg = load_config(config_path);
  if (seed_set) cfg.mcmc.seed = seed;
  LoadedData d = load_data(cfg);

  engine::FitOptions opts;
  opts.exec = cfg.exec;
  engine::ForecastSpec spec;
  spec.cutoff_year = cutoff_year;
  spec.horizon = horizon;
  spec.level = cfg.check_level;
  spec.draw_stride = cfg.check_stride;
  engine::ForecastReport report = engine::forecast_experiment(
      cfg.model, d.sel.kept, d.urban, d.regions, cfg.mcmc, opts, spec);

  OutDir out(out_dir);
  std::string cells = "survey_id,country,area,fuel,year,lead,observed,replicate_mean,lo,hi,inside\n";
  for (const auto& c : report.cells) {
    cells += c.survey_id + "," + c.country + "," + area_name(c.area) + "," +
             node_name(static_cast<Node>(c.node)) + "," + std::to_string(c.year) + "," +
             std::to_string(c.lead) + "," + io::fmt(c.observed) + "," + io::fmt(c.rep_mean) +
             "," + io::fmt(c.lo) + "," + io::fmt(c.hi) + "," + (c.inside ? "1" : "0") + "\n";
  }
  out.write("forecast_cells.csv", cells);

  std::string widths = "lead,median_width\n";
  for (const auto& [lead, w] : report.median_width_by_lead) {
    widths += std::to_string(lead) + "," + io::fmt(w) + "\n";
  }
  out.write("width_by_lead.csv", widths);

  json summary;
  summary["empty"] = report.empty;
  summary["cutoff_year"] = cutoff_year;
  summary["horizon"] = horizon;
  summary["n_cells"] = static_cast<int>(report.cells.size());
  summary["coverage"] = report.coverage;
  summary["n_series"] = report.n_series;
  summary["monotone_series"] = report.monotone_series;
  summary["monotone_fraction"] =
      report.n_series > 0 ? static_cast<double>(report.monotone_series) / report.n_series : 1.0;
  summary["skipped_records"] = report.skipped_records;
  out.write_json_file("forecast_summary.json", summary);

  return finish_manifest(out, "forecast-experiment", cfg.mcmc.seed,
                         {fs::absolute(config_path).string(), cfg.surveys_path,
                          cfg.un_urban_path, cfg.regions_path});
}

int cmd_simulate(const std::string& out_dir, std::uint64_t seed, const std::string& n_grid_arg,
                 const std::string& sizes_path, int n_countries, int surveys_per_country) {
  synth::AppendixASpec spec;
  spec.n_countries = n_countries;
  spec.surveys_per_country = surveys_per_country;
  std::vector<std::string> inputs;
  if (!sizes_path.empty()) {
    std::istringstream in(read_file(sizes_path));
    std::string tok;
    while (in >> tok) spec.sizes.push_back(std::stoll(tok));
    inputs.push_back(fs::absolute(sizes_path).string());
  }
  Rng rng = make_rng(seed, 1);
  synth::AppendixAData data = synth::synthesize_appendix_a(spec, rng);

  simexp::ExperimentConfig cfg;
  if (!n_grid_arg.empty()) {
    cfg.n_grid.clear();
    for (const auto& tok : split(n_grid_arg, ',')) cfg.n_grid.push_back(std::stoll(tok));
  }
  cfg.mcmc.seed = derive_seed(seed, 2);
  simexp::ExperimentResult res = simexp::run_experiment(data, cfg);

  OutDir out(out_dir);
  const int k = data.k;
  std::string truth = "country,component,mu,phi\n";
  for (size_t c = 0; c < data.countries.size(); ++c) {
    for (int comp = 0; comp < k; ++comp) {
      truth += std::to_string(c) + "," + std::to_string(comp) + "," +
               io::fmt(data.countries[c].mu[comp]) + "," + io::fmt(data.countries[c].phi) +
               "\n";
    }
  }
  out.write("truth.csv", truth);

  std::string sd = "n,country,component,sd_baseline,sd_approx,abs_gap\n";
  std::string mse = "n,country,mse_baseline,mse_approx,abs_gap\n";
  for (const auto& s : res.by_n) {
    for (size_t c = 0; c < data.countries.size(); ++c) {
      for (int comp = 0; comp < k; ++comp) {
        size_t i = c * k + comp;
        sd += std::to_string(s.n) + "," + std::to_string(c) + "," + std::to_string(comp) +
              "," + io::fmt(res.baseline_sd[i]) + "," + io::fmt(s.sd_approx[i]) + "," +
              io::fmt(s.sd_gap[i]) + "\n";
      }
      mse += std::to_string(s.n) + "," + std::to_string(c) + "," +
             io::fmt(res.baseline_mse[c]) + "," + io::fmt(s.mse_approx[c]) + "," +
             io::fmt(s.mse_gap[c]) + "\n";
    }
  }
  out.write("sd_by_n.csv", sd);
  out.write("mse_by_n.csv", mse);

  std::string med = "n,median_sd_gap,median_mse_gap\n";
  for (const auto& s : res.by_n) {
    med += std::to_string(s.n) + "," + io::fmt(s.median_sd_gap) + "," +
           io::fmt(s.median_mse_gap) + "\n";
  }
  out.write("medians.csv", med);

  std::string qq = "country,component,prob,baseline,approx\n";
  for (const auto& p : res.quantile_pairs) {
    qq += std::to_string(p.country) + "," + std::to_string(p.component) + "," +
          io::fmt(p.prob) + "," + io::fmt(p.baseline) + "," + io::fmt(p.approx) + "\n";
  }
  out.write("qq.csv", qq);

  json summary;
  summary["quantile_r"] = res.quantile_r;
  summary["n_countries"] = static_cast<int>(data.countries.size());
  summary["n_grid"] = res.n_grid;
  out.write_json_file("summary.json", summary);

  return finish_manifest(out, "simulate-appendix-a", seed, inputs);
}

int cmd_diagnostics(const std::string& draws_dir, const std::string& out_dir) {
  DrawsBundle b = open_draws_dir(draws_dir);
  model::Model m(b.cfg.model, b.data.sel.kept, b.data.urban, b.data.regions);
  mcmc::PosteriorDraws draws =
      read_draws_csv((fs::path(draws_dir) / "draws.csv").string(), m.param_names());
  if (draws.chains.size() < 2) {
    throw std::runtime_error("diagnostics: need at least two chains");
  }
  engine::MonitoredReport report = engine::monitored_report(m, draws, 0.95);

  OutDir out(out_dir);
  std::string psrf = "parameter,psrf,mean,q2.5,q50,q97.5\n";
  for (const auto& p : report.params) {
    psrf += csv_quote(p.name) + "," + io::fmt(p.psrf) + "," + io::fmt(p.mean) + "," +
            io::fmt(p.lo) + "," + io::fmt(p.median) + "," + io::fmt(p.hi) + "\n";
  }
  out.write("psrf.csv", psrf);

  // fixed 0.01-wide bins from 1.00 to 1.10 plus an overflow row
  std::vector<int> bins(10, 0);
  int overflow = 0;
  for (const auto& p : report.params) {
    int b_i = static_cast<int>(std::floor((p.psrf - 1.0) / 0.01));
    if (b_i >= 10) {
      ++overflow;
    } else {
      ++bins[std::max(0, b_i)];
    }
  }
  std::string hist = "bin_lo,bin_hi,count\n";
  for (int i = 0; i < 10; ++i) {
    hist += io::fmt(1.0 + 0.01 * i) + "," + io::fmt(1.0 + 0.01 * (i + 1)) + "," +
            std::to_string(bins[i]) + "\n";
  }
  hist += io::fmt(1.10) + ",inf," + std::to_string(overflow) + "\n";
  out.write("psrf_histogram.csv", hist);

  std::vector<engine::MonitoredParam> worst = report.params;
  std::stable_sort(worst.begin(), worst.end(), [](const auto& a, const auto& b2) {
    if (a.psrf != b2.psrf) return a.psrf > b2.psrf;
    return a.name < b2.name;
  });
  std::string w20 = "parameter,psrf\n";
  for (size_t i = 0; i < worst.size() && i < 20; ++i) {
    w20 += csv_quote(worst[i].name) + "," + io::fmt(worst[i].psrf) + "\n";
  }
  out.write("worst20.csv", w20);

  double frac = report.frac_psrf_below(1.05);
  json summary;
  summary["n_parameters"] = static_cast<int>(report.params.size());
  summary["threshold"] = 1.05;
  summary["frac_below_threshold"] = frac;
  summary["pass"] = frac >= 0.95;
  out.write_json_file("diagnostics_summary.json", summary);

  return finish_manifest(out, "diagnostics", b.seed, b.inputs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tiered compositional trend estimation for household fuel-use surveys"};
  app.require_subcommand(1);

  std::string config_path, out_dir, draws_dir;
  std::uint64_t seed = 1;
  std::string countries_arg, years_arg, n_grid_arg, sizes_path;
  bool un_offsets_only = false, with_variability = false;
  int cutoff_year = 0, horizon = 0;

  auto* fit = app.add_subcommand("fit", "fit the model to a survey corpus");
  fit->add_option("--config", config_path, "config JSON")->required();
  fit->add_option("--out", out_dir, "output directory")->required();
  auto* fit_seed = fit->add_option("--seed", seed, "override the config seed");

  auto* predict = app.add_subcommand("predict", "trend quantiles from a fitted run");
  predict->add_option("--draws", draws_dir, "fit output directory")->required();
  predict->add_option("--out", out_dir, "output directory")->required();
  predict->add_option("--countries", countries_arg, "comma-separated countries (default all)");
  predict->add_option("--years", years_arg, "comma-separated years (default fitted grid)");
  predict->add_flag("--un-offsets-only", un_offsets_only,
                    "overall mixing weight from the anchor share alone");
  predict->add_flag("--with-survey-variability", with_variability,
                    "add finite-sample replicate quantiles");
  auto* predict_seed = predict->add_option("--seed", seed, "replicate stream seed");

  auto* check = app.add_subcommand("check", "posterior-predictive coverage tables");
  check->add_option("--draws", draws_dir, "fit output directory")->required();
  check->add_option("--out", out_dir, "output directory")->required();
  auto* check_seed = check->add_option("--seed", seed, "replicate stream seed");

  auto* fx = app.add_subcommand("forecast-experiment", "out-of-sample forecast scoring");
  fx->add_option("--config", config_path, "config JSON")->required();
  fx->add_option("--out", out_dir, "output directory")->required();
  fx->add_option("--cutoff-year", cutoff_year, "last training year")->required();
  fx->add_option("--horizon", horizon, "scored years past the cutoff (0 = all)");
  auto* fx_seed = fx->add_option("--seed", seed, "override the config seed");

  auto* sim = app.add_subcommand("simulate-appendix-a",
                                 "denominator convergence experiment on synthetic compositions");
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--seed", seed, "generation and fitting seed");
  sim->add_option("--n-grid", n_grid_arg, "comma-separated denominators");
  sim->add_option("--sizes", sizes_path, "file of real survey sizes, one per line");
  int sim_countries = 50, sim_spc = 3;
  sim->add_option("--countries", sim_countries, "synthetic countries (default 50)");
  sim->add_option("--surveys-per-country", sim_spc, "surveys per country (default 3)");

  auto* diag = app.add_subcommand("diagnostics", "convergence diagnostics for a fitted run");
  diag->add_option("--draws", draws_dir, "fit output directory")->required();
  diag->add_option("--out", out_dir, "output directory")->required();

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic survey corpus");
  synth_cmd->add_option("--out", out_dir, "output directory")->required();
  synth_cmd->add_option("--seed", seed, "generation seed");
  synth_cmd->add_option("--countries", synth_args.spec.n_countries, "countries (default 6)");
  synth_cmd->add_option("--surveys-per-country", synth_args.spec.surveys_per_country,
                        "surveys per country (default 12)");
  synth_cmd->add_option("--outlier-fraction", synth_args.spec.outlier_fraction,
                        "share of surveys regenerated as junk (default 0.02)");
  synth_cmd->add_option("--year-lo", synth_args.spec.year_lo, "first grid year");
  synth_cmd->add_option("--year-hi", synth_args.spec.year_hi, "last grid year");
  synth_cmd->add_option("--spline-columns", synth_args.spec.K, "basis columns (default 10)");
  synth_cmd->add_option("--denominator", synth_args.spec.N, "count denominator (default 1e5)");
  synth_cmd->add_flag("--zero-variability", synth_args.spec.zero_survey_variability,
                      "binomial sticks at the exact trend");
  bool no_exclusions = false;
  synth_cmd->add_flag("--no-exclusions", no_exclusions, "skip the three excluded records");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(fit)) {
      return cmd_fit(config_path, out_dir, fit_seed->count() > 0, seed);
    }
    if (app.got_subcommand(predict)) {
      return cmd_predict(draws_dir, out_dir, countries_arg, years_arg, un_offsets_only,
                         with_variability, predict_seed->count() > 0, seed);
    }
    if (app.got_subcommand(check)) {
      return cmd_check(draws_dir, out_dir, check_seed->count() > 0, seed);
    }
    if (app.got_subcommand(fx)) {
      return cmd_forecast(config_path, out_dir, cutoff_year, horizon, fx_seed->count() > 0,
                          seed);
    }
    if (app.got_subcommand(sim)) {
      return cmd_simulate(out_dir, seed, n_grid_arg, sizes_path, sim_countries, sim_spc);
    }
    if (app.got_subcommand(diag)) {
      return cmd_diagnostics(draws_dir, out_dir);
    }
    if (app.got_subcommand(synth_cmd)) {
      synth_args.out = out_dir;
      synth_args.seed = seed;
      synth_args.spec.with_exclusions = !no_exclusions;
      return cmd_synth(synth_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
