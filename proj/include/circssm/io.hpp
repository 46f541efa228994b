// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "circssm/anneal.hpp"
#include "circssm/forecast.hpp"
#include "circssm/mcmc.hpp"
#include "circssm/simulate.hpp"

namespace circssm {

/// Observed series plus optional validation angles. Times must be strictly
/// increasing; values must be finite.
struct Dataset {
  std::vector<double> times;
  Eigen::VectorXd y;
  std::vector<double> theta_true;  // empty or same length as y

  int T() const { return static_cast<int>(y.size()); }
  bool has_theta() const { return !theta_true.empty(); }
};

/// CSV with header `t,y[,theta_true]`, '.' decimal, UTF-8. Lines starting
/// with '#' are metadata and skipped. `degrees` converts theta_true to
/// radians in [0, 2pi).
Dataset read_dataset(const std::string& path, bool degrees = false);

void write_dataset(const std::string& path, const Dataset& ds,
                   const std::vector<std::string>& meta_lines);

struct TrendCoeffs {
  double intercept = 0.0;
  double slope = 0.0;
  double apply(double t) const { return intercept + slope * t; }
};

/// OLS of y on (1, t); returns the residual series and the coefficients so
/// forecasts can be reported back on the original scale.
std::pair<Dataset, TrendCoeffs> detrend_linear(const Dataset& ds);

void write_sample_set(const std::string& path, const SampleSet& samples,
                      const std::vector<std::string>& meta_lines);
SampleSet read_sample_set(const std::string& path);

/// Flat key-value run configuration with sectioned keys (mcmc.n_iter, ...).
/// Unknown keys are rejected; `seed` is mandatory.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int chains = 1;

  // data.*
  std::string data_path;
  bool data_degrees = false;
  bool data_holdout_last = true;
  bool data_detrend = false;

  // grid.*
  int grid_n = 20;
  GridMode grid_mode = GridMode::time_scaled;

  // model.* (plug-in evolution scales, sd parameterization)
  double sigma_g = 0.1;
  double sigma_eta = 0.1;

  PriorSpec priors;
  McmcConfig mcmc;
  AnnealConfig annealing;

  // sim.*
  std::string sim_kind = "nonlinear";  // nonlinear | model
  NonlinearSimConfig sim;
  int sim_model_T = 50;

  // forecast.*
  double forecast_level = 0.95;
  int forecast_bins = 100;

  /// Canonical text of every key (sorted), used for the config hash.
  std::string canonical() const;
  std::string config_hash() const;
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

/// Standard metadata stamped into every output file.
std::vector<std::string> output_meta(const RunConfig& cfg);

/// Commands: simulate | mle | fit | forecast | diagnose | validate-gp.
/// Returns a process exit status.
int dispatch(const std::string& command, const RunConfig& cfg);

}  // namespace circssm
