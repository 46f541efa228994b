// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "circssm/circular.hpp"

namespace circssm {

/// A point in the process domain: linear time paired with an angle.
struct LinCircPoint {
  double t = 0.0;
  Angle theta;

  LinCircPoint() = default;
  LinCircPoint(double time, double angle_raw) : t(time), theta(Angle::wrap(angle_raw)) {}
};

/// Process scale sigma (> 0). The kernel-convolution construction ties it to
/// the time-kernel bandwidth by sigma^2 = 1/(2*psi).
struct GpScale {
  double sigma = 1.0;

  explicit GpScale(double s);
  double sigma2() const { return sigma * sigma; }
  double psi() const { return 1.0 / (2.0 * sigma2()); }
  static GpScale from_psi(double psi);
};

/// h(t, z) = (1, t, cos z, sin z)'.
Eigen::Vector4d basis_h(const LinCircPoint& p);

/// Closed-form covariance sigma^2 * exp(-sigma^4 (t1-t2)^2) * cos(theta1-theta2).
/// Zero whenever the angles are orthogonal, for any time separation.
double cov(const LinCircPoint& p1, const LinCircPoint& p2, const GpScale& s);

/// Correlation part of cov (cov / sigma^2).
double corr(const LinCircPoint& p1, const LinCircPoint& p2, const GpScale& s);

/// Correlation matrix A with A(i,j) = corr(points[i], points[j]).
Eigen::MatrixXd corr_matrix(const std::vector<LinCircPoint>& points, const GpScale& s);

/// sigma^2 * A.
Eigen::MatrixXd cov_matrix(const std::vector<LinCircPoint>& points, const GpScale& s);

/// Cholesky factorization with escalating diagonal jitter. The first attempt
/// is exact; on failure jitter starts at 1e-10 * mean(diag) and grows by 10x,
/// up to 6 retries, before a singular-matrix error naming the computation.
class CholFactor {
 public:
  CholFactor(const Eigen::MatrixXd& a, const std::string& context);

  template <typename Derived>
  auto solve(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.solve(b.derived()).eval();
  }
  double log_det() const { return log_det_; }
  double jitter() const { return jitter_; }
  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }
  Eigen::Index size() const { return llt_.matrixLLT().rows(); }

  /// log N(x; mean, A) for the factored A.
  double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean) const;

  /// mean + L * z with z standard normal.
  Eigen::VectorXd sample(const Eigen::VectorXd& mean, Rng& rng) const;

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
  double jitter_ = 0.0;
};

/// Convenience: solve A x = b under the jitter policy.
Eigen::VectorXd chol_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                           const std::string& context = "chol_solve");

struct GpConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Standard GP regression conditional with linear mean h'beta:
///   mean = h_q'beta + S_qt A^-1 (vals - H beta)
///   cov  = sigma^2 (C_qq - S_qt A^-1 S_qt')
/// Negative conditional variances above -1e-8 * sigma^2 clamp to zero; worse
/// ones raise.
GpConditional gp_condition(const std::vector<LinCircPoint>& train, const Eigen::VectorXd& vals,
                           const std::vector<LinCircPoint>& query,
                           const Eigen::Vector4d& mean_coeffs, const GpScale& s);

struct QuadratureResult {
  double estimate = 0.0;
  double error_bound = 0.0;
};

/// Deterministic quadrature of the kernel-convolution form of the covariance:
///   psi^-2 pi^-3/2 * [int exp(-((y-t1)^2+(y-t2)^2)/(2 psi^2)) dy]
///                  * [int_0^pi cos(u-theta1) cos(u-theta2) du]
/// Gauss-Legendre on [0, pi] for the angle factor, Gauss-Legendre on
/// +-8 psi around the time midpoint for the time factor. Independent check of
/// the closed form; errors if the quadrature did not converge below tol.
QuadratureResult convolution_cov_oracle(const LinCircPoint& p1, const LinCircPoint& p2, double psi,
                                        int n_quad, double tol = 1e-8);

}  // namespace circssm
