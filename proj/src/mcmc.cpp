#include "fueltrends/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fueltrends/special.hpp"

namespace fueltrends::mcmc {

void McmcConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("mcmc: chains must be >= 1");
  if (iterations < 1) throw std::invalid_argument("mcmc: iterations must be >= 1");
  if (burn_in < 0 || burn_in >= iterations)
    throw std::invalid_argument("mcmc: burn_in must lie in [0, iterations)");
  if (thin < 1) throw std::invalid_argument("mcmc: thin must be >= 1");
  if (adaptation.interval < 1) throw std::invalid_argument("mcmc: adaptation interval must be >= 1");
  if (!(adaptation.target_scalar > 0.0 && adaptation.target_scalar < 1.0) ||
      !(adaptation.target_vector > 0.0 && adaptation.target_vector < 1.0))
    throw std::invalid_argument("mcmc: acceptance targets must lie in (0, 1)");
  if (init_retries < 1) throw std::invalid_argument("mcmc: init_retries must be >= 1");
}

ChainResult run_chain(const GibbsProgram& program, const McmcConfig& config, int chain_index) {
  config.validate();
  const int n_blocks = static_cast<int>(program.blocks.size());
  Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(chain_index));

  std::vector<double> x(program.n, 0.0);
  bool ok = false;
  for (int attempt = 0; attempt < config.init_retries; ++attempt) {
    program.init(x, rng);
    if (std::isfinite(program.full_logdens(x.data()))) {
      ok = true;
      break;
    }
  }
  if (!ok)
    throw std::runtime_error("mcmc: could not find a finite starting point in " +
                             std::to_string(config.init_retries) + " attempts");

  std::vector<double> log_scale(n_blocks, std::log(0.1));
  std::vector<long long> batch_accepts(n_blocks, 0);
  std::vector<long long> post_accepts(n_blocks, 0);
  std::vector<double> old_coords;

  ChainResult result;
  result.draws.reserve(static_cast<std::size_t>(config.draws_per_chain()));
  if (config.burn_in == 0) result.scales_at_burnin = log_scale;

  std::vector<double> emitted;
  for (int iter = 0; iter < config.iterations; ++iter) {
    const bool adapting = iter < config.burn_in;
    for (int b = 0; b < n_blocks; ++b) {
      const GibbsBlock& block = program.blocks[b];
      const double before = program.block_logdens(b, x.data());
      const double step = std::exp(log_scale[b]);
      old_coords.assign(block.xs.size(), 0.0);
      for (std::size_t k = 0; k < block.xs.size(); ++k) {
        old_coords[k] = x[block.xs[k]];
        x[block.xs[k]] += step * rnorm(rng);
      }
      const double after = program.block_logdens(b, x.data());
      const bool accept = std::log(runif(rng)) < after - before;
      if (accept) {
        if (adapting) ++batch_accepts[b];
        if (!adapting) ++post_accepts[b];
      } else {
        for (std::size_t k = 0; k < block.xs.size(); ++k) x[block.xs[k]] = old_coords[k];
      }
    }
    if (program.custom_sweep) program.custom_sweep(x.data(), rng, adapting);

    if (adapting && (iter + 1) % config.adaptation.interval == 0) {
      const int batch = (iter + 1) / config.adaptation.interval;
      const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch)));
      for (int b = 0; b < n_blocks; ++b) {
        const double rate =
            static_cast<double>(batch_accepts[b]) / static_cast<double>(config.adaptation.interval);
        const double target = program.blocks[b].vector_block ? config.adaptation.target_vector
                                                             : config.adaptation.target_scalar;
        log_scale[b] += rate > target ? delta : -delta;
        batch_accepts[b] = 0;
      }
    }
    if (iter == config.burn_in - 1) result.scales_at_burnin = log_scale;

    if (!adapting && (iter - config.burn_in + 1) % config.thin == 0) {
      if (program.emit) {
        program.emit(x, emitted);
      } else {
        emitted = x;
      }
      result.draws.push_back(emitted);
    }
  }

  const double kept = static_cast<double>(config.iterations - config.burn_in);
  result.acceptance.resize(n_blocks);
  for (int b = 0; b < n_blocks; ++b)
    result.acceptance[b] = static_cast<double>(post_accepts[b]) / kept;
  result.scales_final = log_scale;
  result.final_x = x;
  return result;
}

PosteriorDraws run_chains(const std::function<GibbsProgram(int)>& make_program,
                          const McmcConfig& config, Exec exec) {
  config.validate();
  PosteriorDraws out;
  out.chains.resize(static_cast<std::size_t>(config.chains));
  parallel_for(static_cast<std::size_t>(config.chains), exec, [&](std::size_t c) {
    GibbsProgram program = make_program(static_cast<int>(c));
    out.chains[c] = run_chain(program, config, static_cast<int>(c));
  });
  return out;
}

double psrf(const std::vector<std::vector<double>>& traces) {
  const int m = static_cast<int>(traces.size());
  if (m < 2) throw std::invalid_argument("psrf: needs at least two chains");
  const std::size_t n = traces[0].size();
  for (const auto& t : traces)
    if (t.size() != n) throw std::invalid_argument("psrf: chains must have equal lengths");
  if (n < 2) throw std::invalid_argument("psrf: chains must have at least two draws");

  std::vector<double> means(m, 0.0);
  double w = 0.0;
  for (int j = 0; j < m; ++j) {
    double mean = 0.0;
    for (double v : traces[j]) mean += v;
    mean /= static_cast<double>(n);
    means[j] = mean;
    double ss = 0.0;
    for (double v : traces[j]) ss += (v - mean) * (v - mean);
    w += ss / static_cast<double>(n - 1);
  }
  w /= static_cast<double>(m);

  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= static_cast<double>(m);
  double b_over_n = 0.0;
  for (double v : means) b_over_n += (v - grand) * (v - grand);
  b_over_n /= static_cast<double>(m - 1);

  if (w <= 0.0) return 1.0;
  const double nn = static_cast<double>(n);
  const double vhat = (nn - 1.0) / nn * w + b_over_n;
  // the finite-sample formula can dip below 1 when chains agree; floor it
  return std::max(1.0, std::sqrt(vhat / w));
}

double coverage(const std::vector<std::vector<double>>& replicates,
                const std::vector<double>& observations, double level) {
  if (replicates.size() != observations.size())
    throw std::invalid_argument("coverage: replicates and observations must align");
  if (replicates.empty()) throw std::invalid_argument("coverage: nothing to score");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("coverage: level must lie in (0, 1)");

  const double tail = (1.0 - level) / 2.0;
  long long inside = 0;
  for (std::size_t i = 0; i < replicates.size(); ++i) {
    std::vector<double> sorted = replicates[i];
    if (sorted.empty()) throw std::invalid_argument("coverage: empty replicate set");
    std::sort(sorted.begin(), sorted.end());
    const double lo = quantile_sorted(sorted, tail);
    const double hi = quantile_sorted(sorted, 1.0 - tail);
    if (observations[i] >= lo && observations[i] <= hi) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(replicates.size());
}

}  // namespace fueltrends::mcmc
