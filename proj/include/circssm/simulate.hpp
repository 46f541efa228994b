// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "circssm/model.hpp"

namespace circssm {

/// Nonlinear circular benchmark:
///   w_t = alpha w_{t-1} + beta w_{t-1}/(1 + w_{t-1}^2) + gamma cos(1.2 (t-1)) + u_t
///   theta_t = (pi + 2 atan(w_t)) mod 2pi,   w = tan((theta - pi)/2)
///   y_t = tan^2(theta_t)/20 + v_t.
struct NonlinearSimConfig {
  int T = 101;
  double alpha = 0.05;
  double beta = 0.1;
  double gamma = 0.2;
  double sigma_u = 0.1;
  double sigma_v = 0.1;
  double theta0 = M_PI;
  std::uint64_t seed = 1;
};

struct NonlinearSim {
  Eigen::VectorXd y;           // y_1..y_T
  std::vector<Angle> theta;    // theta_0..theta_T
};

NonlinearSim simulate_nonlinear(const NonlinearSimConfig& cfg);

/// One replicate worth of data handed to a fit pipeline: the training series,
/// the held-out next observation, and the true latent angles for scoring.
struct HarnessData {
  Eigen::VectorXd y;
  std::vector<double> times;
  double y_holdout = 0.0;
  std::vector<double> theta_true;  // angles 1..T
};

/// What a fit pipeline reports back: posterior predictive draws for the
/// held-out observation and posterior draws of the latent angles x_{1:T}.
struct FitOutput {
  std::vector<double> predictive;
  std::vector<std::vector<double>> latent_draws;
};

struct ReplicateRow {
  int rep = 0;
  bool ok = false;
  bool covered = false;
  double hpd_lo = 0.0;
  double hpd_hi = 0.0;
  double width = 0.0;
  double latent_top_mass_frac = 0.0;
  std::string error;
};

struct ReplicateReport {
  std::vector<ReplicateRow> rows;
  int n_ok() const;
  int n_covered() const;
  double mean_latent_frac() const;
};

/// Generate -> fit -> forecast -> score, repeated with per-replicate seeds.
/// Scores: held-out coverage by the level-HPD of the predictive draws, HPD
/// width, and the fraction of times whose true angle lands in the top-50%-mass
/// bins of its latent density column. Per-replicate failures are recorded,
/// not fatal, unless every replicate fails.
ReplicateReport replicate_harness(
    const std::function<HarnessData(std::uint64_t)>& generator,
    const std::function<FitOutput(const HarnessData&, std::uint64_t)>& fit_pipeline, int n_reps,
    double hpd_level, int n_bins, std::uint64_t seed);

}  // namespace circssm
