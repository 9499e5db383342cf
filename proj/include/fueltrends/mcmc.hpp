#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fueltrends/parallel.hpp"
#include "fueltrends/rng.hpp"

namespace fueltrends::mcmc {

struct AdaptationConfig {
  double target_scalar = 0.44;
  double target_vector = 0.234;
  int interval = 50;
};

struct McmcConfig {
  int chains = 4;
  int iterations = 8000;
  int burn_in = 4000;
  int thin = 4;
  std::uint64_t seed = 1;
  AdaptationConfig adaptation;
  int init_retries = 50;

  void validate() const;
  int draws_per_chain() const { return (iterations - burn_in) / thin; }
};

struct GibbsBlock {
  std::vector<int> xs;
  bool vector_block = false;
};

// A sampling problem over a flat coordinate vector. block_logdens may be any
// function whose coordinate-block differences match the full target's (a
// Markov blanket). custom_sweep runs once per iteration after the parameter
// sweep and may hold latent state (imputed counts) in its closure; the flag
// tells it whether adaptation is still allowed. emit maps the internal
// coordinates to the reported scale; identity when absent.
struct GibbsProgram {
  int n = 0;
  std::vector<GibbsBlock> blocks;
  std::function<double(int block, const double* x)> block_logdens;
  std::function<double(const double* x)> full_logdens;
  std::function<void(std::vector<double>& x, Rng& rng)> init;
  std::function<void(const double* x, Rng& rng, bool adapting)> custom_sweep;
  std::function<void(const std::vector<double>& x, std::vector<double>& out)> emit;
};

struct ChainResult {
  std::vector<std::vector<double>> draws;  // draw-major, emitted scale
  std::vector<double> acceptance;          // per block, post burn-in fraction
  std::vector<double> scales_at_burnin;    // log proposal sds when adaptation froze
  std::vector<double> scales_final;        // must equal scales_at_burnin
  std::vector<double> final_x;             // internal scale
};

// One adaptive random-walk Metropolis-within-Gibbs chain. The RNG stream is
// derived from (config.seed, chain_index); re-running is bit-identical.
ChainResult run_chain(const GibbsProgram& program, const McmcConfig& config, int chain_index);

struct PosteriorDraws {
  std::vector<ChainResult> chains;

  int draws_per_chain() const {
    return chains.empty() ? 0 : static_cast<int>(chains[0].draws.size());
  }
  int total_draws() const { return static_cast<int>(chains.size()) * draws_per_chain(); }
};

// Runs config.chains chains; make_program is called once per chain so latent
// state lives per chain. exec chooses whole-chain parallelism.
PosteriorDraws run_chains(const std::function<GibbsProgram(int)>& make_program,
                          const McmcConfig& config, Exec exec = Exec::serial);

// Gelman-Rubin potential scale reduction factor over equal-length scalar
// traces, classic two-part formula floored at 1.0; zero within-chain
// variance gives 1.0.
double psrf(const std::vector<std::vector<double>>& traces);

// Fraction of observations inside the central `level` interval of their own
// replicate distribution.
double coverage(const std::vector<std::vector<double>>& replicates,
                const std::vector<double>& observations, double level);

}  // namespace fueltrends::mcmc
