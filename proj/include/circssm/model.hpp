// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

#include "circssm/gp.hpp"
#include "circssm/util.hpp"

namespace circssm {

/// Unnormalized variance prior of the form
///   p(s2) ~ (s2)^{-(alpha+2)/2} exp(-gamma / (2 s2)),
/// i.e. inverse gamma with shape alpha/2 and scale gamma/2. A conventional
/// IG(shape, scale) pair (a, b) maps to alpha = 2a, gamma = 2b.
struct InvGammaForm {
  double alpha = 8.02;
  double gamma = 0.0501;

  double shape() const { return 0.5 * alpha; }
  double scale() const { return 0.5 * gamma; }
  double mode() const { return gamma / (alpha + 2.0); }
  double log_density(double sigma2) const;
  double sample(Rng& rng) const;
};

/// Model parameters. Components of beta_g under the fixed mask are pinned at
/// their constructed values (identifiability constraint; by default the cos
/// and sin coefficients are fixed).
struct ModelParams {
  Eigen::Vector4d beta_f = Eigen::Vector4d::Zero();
  Eigen::Vector4d beta_g = Eigen::Vector4d::Zero();
  double sigma2_eps = 0.01;
  double sigma2_eta = 0.01;
  double sigma2_f = 0.01;
  double sigma2_g = 0.01;
  std::array<bool, 4> beta_g_fixed_mask = {false, false, true, true};

  GpScale scale_f() const { return GpScale(std::sqrt(sigma2_f)); }
  GpScale scale_g() const { return GpScale(std::sqrt(sigma2_g)); }
  std::vector<int> beta_g_free_indices() const;
  void validate() const;
};

struct PriorSpec {
  VonMisesParams x0{M_PI, 1.0};
  InvGammaForm sigma2_eps{8.02, 0.0501};
  InvGammaForm sigma2_eta{8.02, 1.002};
  InvGammaForm sigma2_f{8.02, 1.002};
  InvGammaForm sigma2_g{8.02, 1.002};
  Eigen::Vector4d beta_f_mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d beta_f_cov = Eigen::Matrix4d::Identity();
  Eigen::Vector4d beta_g_mean = {2.5, 0.04, 1.0, 1.0};
  Eigen::Matrix4d beta_g_cov =
      Eigen::Vector4d{1.0, 1.0, 0.0, 0.0}.asDiagonal().toDenseMatrix();

  double log_density_beta_f(const Eigen::Vector4d& b) const;
  /// Density over the free components only, under the mask.
  double log_density_beta_g_free(const Eigen::Vector4d& b, const std::array<bool, 4>& mask) const;
};

enum class GridMode { time_scaled, paper_literal };

/// Fixed evaluation grid for the evolution process: angular midpoints of n
/// subintervals of [0, 2pi] paired with one random time per subinterval, plus
/// the correlation matrix A and its factorization. A depends on sigma_g, so a
/// grid is bound to the scale it was built with; rebuilt() re-binds the same
/// points to a new scale.
class LookupGrid {
 public:
  LookupGrid(std::vector<LinCircPoint> points, const GpScale& sigma_g);

  Eigen::Index n() const { return static_cast<Eigen::Index>(points_.size()); }
  const std::vector<LinCircPoint>& points() const { return points_; }
  const GpScale& scale() const { return sigma_g_; }
  const Eigen::MatrixXd& corr() const { return a_; }
  const CholFactor& chol() const { return chol_; }
  const Eigen::MatrixXd& basis() const { return h_; }          // n x 4
  const Eigen::MatrixXd& ainv_basis() const { return ainv_h_; }  // A^-1 H

  /// s(p): correlations of p against every grid point.
  Eigen::VectorXd cross_corr(const LinCircPoint& p) const;

  LookupGrid rebuilt(const GpScale& sigma_g) const { return LookupGrid(points_, sigma_g); }

 private:
  std::vector<LinCircPoint> points_;
  GpScale sigma_g_;
  Eigen::MatrixXd a_;
  CholFactor chol_;
  Eigen::MatrixXd h_;
  Eigen::MatrixXd ainv_h_;
};

/// Grid construction. Angular coordinates are the subinterval midpoints
/// (2i+1)pi/n. Time coordinates are uniform draws from the i-th subinterval of
/// [0, 2pi] (paper_literal) or of [t_lo, t_hi] (time_scaled). Retries with
/// fresh time draws if A cannot be factorized, up to 5 attempts.
LookupGrid build_grid(int n, double t_lo, double t_hi, GridMode mode, const GpScale& sigma_g,
                      Rng& rng);

using DzVector = Eigen::VectorXd;

/// Latent trajectory: x0, the linear seed g*(1, x0), and angles/wrap counters
/// indexed 1..T+1 (slot 0 of x and k is unused padding).
struct LatentPath {
  Angle x0;
  double g1 = 0.0;
  std::vector<Angle> x;       // size T+2, valid at 1..T+1
  std::vector<WrapCounter> k;  // size T+2, valid at 1..T+1

  explicit LatentPath(int T = 0) : x(T + 2), k(T + 2, 0) {}
  int T() const { return static_cast<int>(x.size()) - 2; }
  double x_star(int t) const { return x[t].value + kTwoPi * static_cast<double>(k[t]); }
};

struct MomentPair {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Prior moments of D_z: mean H beta_g, covariance sigma2_g A.
MomentPair dz_prior_moments(const LookupGrid& grid, const ModelParams& p);

/// Moments of D_z given x0 and g1 = g*(1, x0):
///   mean = H beta_g + s (g1 - h(1,x0)'beta_g),  cov = sigma2_g (A - s s').
MomentPair dz_given_g1(const LookupGrid& grid, Angle x0, double g1, const ModelParams& p);

struct ScalarMoments {
  double mean = 0.0;
  double var = 0.0;
};

/// Conditional of g*(t, x_prev) given D_z:
///   mu = h'beta_g + s'A^-1(D_z - H beta_g),  var = sigma2_g (1 - s'A^-1 s).
ScalarMoments gstar_conditional(double t, Angle x_prev, const DzVector& dz, const LookupGrid& grid,
                                const ModelParams& p);

/// Wrapped-normal transition parameters for x_t: the gstar conditional mean and
/// sigma2_eta plus the conditional variance. Errors if the total variance
/// degenerates to zero.
ScalarMoments transition_moments(double t, Angle x_prev, const DzVector& dz,
                                 const LookupGrid& grid, const ModelParams& p);

/// Marginal moments of the observed series given the latent angles:
///   mean_t = h(t, x_t)'beta_f,  cov = sigma2_f A_f + sigma2_eps I.
MomentPair obs_marginal_moments(const std::vector<Angle>& x, const std::vector<double>& times,
                                const ModelParams& p);

/// log N(y; obs_marginal_moments).
double obs_log_density(const Eigen::VectorXd& y, const std::vector<Angle>& x,
                       const std::vector<double>& times, const ModelParams& p);

struct GeneratedPath {
  LatentPath path;
  DzVector dz;
  Eigen::VectorXd y;
};

/// Latent-only forward draw (x0 prior, g1, D_z, then the wrapped chain).
std::pair<LatentPath, DzVector> sample_latent(int T, const LookupGrid& grid,
                                              const ModelParams& p, const VonMisesParams& x0_prior,
                                              Rng& rng);

/// Full generative draw including y_{1:T} at times 1..T.
GeneratedPath generate_path(int T, const LookupGrid& grid, const ModelParams& p,
                            const PriorSpec& prior, Rng& rng);

}  // namespace circssm
