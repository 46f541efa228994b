// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "circssm/model.hpp"

namespace circssm {

struct PredictiveMoments {
  double mean = 0.0;
  double var = 0.0;
};

/// One-step-ahead predictive moments given a posterior draw: condition the
/// observation GP on the observed series at the sampled latent angles,
///   mean = h(t_next, x_next)'beta_f + s'A_f^-1 (y - H beta_f)
///   var  = sigma2_eps + sigma2_f (1 - s'A_f^-1 s).
PredictiveMoments predictive_moments(const Eigen::VectorXd& y, const std::vector<Angle>& x,
                                     const std::vector<double>& times, Angle x_next, double t_next,
                                     const Eigen::Vector4d& beta_f, double sigma2_eps,
                                     double sigma2_f);

double predictive_draw(const PredictiveMoments& m, Rng& rng);

struct HpdInterval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Shortest interval of ceil(level * n) sorted samples. Single-interval
/// convention; needs at least 100 samples.
HpdInterval hpd_interval(std::vector<double> samples, double level);

/// Posterior frequency of the latent angles per time, over equal angle bins.
/// Every time column sums to 1; also carries the per-time circular posterior
/// median (the angle minimizing mean arc distance, searched over bin centers).
struct DensityGrid {
  int n_bins = 0;
  int T = 0;
  Eigen::MatrixXd mass;               // n_bins x T, column-normalized
  std::vector<double> circular_median;  // size T

  double bin_center(int b) const;
  int bin_of(double angle) const;
  /// Smallest set of bins covering at least `level` of the column mass;
  /// returns a bin->bool membership vector.
  std::vector<bool> top_mass_bins(int t, double level) const;
};

/// draws[s] is one posterior draw of (x_1, ..., x_T) in radians.
DensityGrid latent_density_grid(const std::vector<std::vector<double>>& draws, int n_bins);

}  // namespace circssm
