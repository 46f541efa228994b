// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdint>
#include <vector>

#include "circssm/model.hpp"

namespace circssm {

struct AnnealConfig {
  double init_sigma_g = 0.2;
  double init_sigma_eta = 0.2;
  double proposal_sd = 0.15;  // log-space random-walk sd, per coordinate
  double temp0 = 1.0;
  double cooling = 0.98;  // geometric: temp_k = temp0 * cooling^k
  int n_iter = 300;
  int mc_samples = 200;  // M draws per objective evaluation
  std::uint64_t seed = 1;

  void validate() const;
};

/// Monte Carlo estimate of the log integrated likelihood at (sigma_g,
/// sigma_eta): draws M joint samples of all remaining unknowns from their
/// priors / generative conditionals and log-sum-exp averages the observation
/// likelihood. The grid correlation is rebuilt for the candidate sigma_g.
/// Callers wanting a smooth annealing surface pass the same rng substream on
/// every call (common random numbers).
double integrated_loglik_mc(double sigma_g, double sigma_eta, const Eigen::VectorXd& y,
                            const std::vector<double>& times, const LookupGrid& grid,
                            const PriorSpec& priors, int mc_samples, Rng& rng);

struct AnnealTraceRow {
  int iter = 0;
  double temp = 0.0;
  double sigma_g = 0.0;
  double sigma_eta = 0.0;
  double loglik = 0.0;
  double best_loglik = 0.0;
  bool accepted = false;
};

struct AnnealResult {
  double sigma_g_hat = 0.0;
  double sigma_eta_hat = 0.0;
  double best_loglik = 0.0;
  std::vector<AnnealTraceRow> trace;
};

/// Simulated-annealing maximizer of the integrated likelihood over
/// (sigma_g, sigma_eta): log-space positive random-walk proposals, acceptance
/// min(1, exp(delta / temp)), geometric cooling, best-so-far result.
AnnealResult anneal(const Eigen::VectorXd& y, const std::vector<double>& times,
                    const LookupGrid& grid, const PriorSpec& priors, const AnnealConfig& cfg);

}  // namespace circssm
