// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/gp.hpp"

#include <cmath>
#include <stdexcept>

#include "circssm/util.hpp"

namespace circssm {

GpScale::GpScale(double s) : sigma(s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("GpScale: sigma must be positive");
}

GpScale GpScale::from_psi(double psi) {
  if (!(psi > 0.0)) throw std::invalid_argument("GpScale::from_psi: psi must be positive");
  return GpScale(std::sqrt(1.0 / (2.0 * psi)));
}

Eigen::Vector4d basis_h(const LinCircPoint& p) {
  return {1.0, p.t, std::cos(p.theta.value), std::sin(p.theta.value)};
}

double corr(const LinCircPoint& p1, const LinCircPoint& p2, const GpScale& s) {
  const double dt = p1.t - p2.t;
  const double s2 = s.sigma2();
  return std::exp(-s2 * s2 * dt * dt) * std::cos(p1.theta.value - p2.theta.value);
}

double cov(const LinCircPoint& p1, const LinCircPoint& p2, const GpScale& s) {
  return s.sigma2() * corr(p1, p2, s);
}

Eigen::MatrixXd corr_matrix(const std::vector<LinCircPoint>& points, const GpScale& s) {
  if (points.empty()) throw std::invalid_argument("corr_matrix: empty point set");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = corr(points[i], points[j], s);
      a(i, j) = c;
      a(j, i) = c;
    }
  }
  return a;
}

Eigen::MatrixXd cov_matrix(const std::vector<LinCircPoint>& points, const GpScale& s) {
  return s.sigma2() * corr_matrix(points, s);
}

CholFactor::CholFactor(const Eigen::MatrixXd& a, const std::string& context) {
  if (a.rows() != a.cols()) throw std::invalid_argument(context + ": matrix not square");
  const double diag_mean = a.rows() > 0 ? a.diagonal().mean() : 0.0;
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 6; ++attempt) {
    Eigen::MatrixXd work = a;
    if (jitter > 0.0) work.diagonal().array() += jitter;
    llt_.compute(work);
    if (llt_.info() == Eigen::Success) {
      jitter_ = jitter;
      if (jitter > 0.0)
        warn(context + ": added diagonal jitter " + std::to_string(jitter));
      log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
      return;
    }
    jitter = (jitter == 0.0) ? 1e-10 * std::max(diag_mean, 1e-300) : 10.0 * jitter;
  }
  throw std::runtime_error(context + ": Cholesky failed after max jitter retries");
}

double CholFactor::gaussian_log_density(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& mean) const {
  const Eigen::VectorXd r = x - mean;
  const double quad = r.dot(llt_.solve(r));
  const double n = static_cast<double>(x.size());
  return -0.5 * (n * std::log(kTwoPi) + log_det_ + quad);
}

Eigen::VectorXd CholFactor::sample(const Eigen::VectorXd& mean, Rng& rng) const {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + llt_.matrixL() * z;
}

Eigen::VectorXd chol_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                           const std::string& context) {
  return CholFactor(a, context).solve(b);
}

GpConditional gp_condition(const std::vector<LinCircPoint>& train, const Eigen::VectorXd& vals,
                           const std::vector<LinCircPoint>& query,
                           const Eigen::Vector4d& mean_coeffs, const GpScale& s) {
  const Eigen::Index nq = static_cast<Eigen::Index>(query.size());
  GpConditional out;
  out.mean.resize(nq);
  Eigen::MatrixXd cqq(nq, nq);
  for (Eigen::Index i = 0; i < nq; ++i) {
    out.mean(i) = basis_h(query[i]).dot(mean_coeffs);
    for (Eigen::Index j = 0; j < nq; ++j) cqq(i, j) = corr(query[i], query[j], s);
  }
  if (train.empty()) {
    out.cov = s.sigma2() * cqq;
    return out;
  }
  const Eigen::Index nt = static_cast<Eigen::Index>(train.size());
  if (vals.size() != nt) throw std::invalid_argument("gp_condition: vals/train size mismatch");
  Eigen::MatrixXd a = corr_matrix(train, s);
  Eigen::MatrixXd cross(nt, nq);  // corr(train_i, query_j)
  Eigen::VectorXd resid(nt);
  for (Eigen::Index i = 0; i < nt; ++i) {
    resid(i) = vals(i) - basis_h(train[i]).dot(mean_coeffs);
    for (Eigen::Index j = 0; j < nq; ++j) cross(i, j) = corr(train[i], query[j], s);
  }
  CholFactor chol(a, "gp_condition");
  const Eigen::MatrixXd ainv_cross = chol.solve(cross);
  out.mean += ainv_cross.transpose() * resid;
  Eigen::MatrixXd cond = cqq - cross.transpose() * ainv_cross;
  const double floor = -1e-8;
  for (Eigen::Index i = 0; i < nq; ++i) {
    if (cond(i, i) < floor)
      throw std::runtime_error("gp_condition: conditional variance below tolerance");
    if (cond(i, i) < 0.0) cond(i, i) = 0.0;
  }
  out.cov = s.sigma2() * cond;
  return out;
}

namespace {

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

double quad_integrate(double lo, double hi, int n, const std::function<double(double)>& f) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  const double c = 0.5 * (hi - lo), m = 0.5 * (hi + lo);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += w[i] * f(m + c * x[i]);
  return c * sum;
}

}  // namespace

QuadratureResult convolution_cov_oracle(const LinCircPoint& p1, const LinCircPoint& p2, double psi,
                                        int n_quad, double tol) {
  if (!(psi > 0.0)) throw std::invalid_argument("convolution_cov_oracle: psi must be positive");
  if (n_quad < 1000) throw std::invalid_argument("convolution_cov_oracle: n_quad must be >= 1000");

  const double t1 = p1.t, t2 = p2.t;
  const double th1 = p1.theta.value, th2 = p2.theta.value;
  const double mid = 0.5 * (t1 + t2);
  const double half_width = 8.0 * psi;

  auto time_f = [&](double y) {
    return std::exp(-((y - t1) * (y - t1) + (y - t2) * (y - t2)) / (2.0 * psi * psi));
  };
  auto angle_f = [&](double u) { return std::cos(u - th1) * std::cos(u - th2); };

  const int n_time = n_quad;
  const int n_angle = std::min(n_quad, 256);
  auto evaluate = [&](int nt, int na) {
    const double ti = quad_integrate(mid - half_width, mid + half_width, nt, time_f);
    const double ai = quad_integrate(0.0, M_PI, na, angle_f);
    return std::pow(psi, -2.0) * std::pow(M_PI, -1.5) * ti * ai;
  };

  QuadratureResult out;
  out.estimate = evaluate(n_time, n_angle);
  const double coarse = evaluate(n_time / 2, std::max(n_angle / 2, 8));
  // Truncating the time integral at +-8 psi discards below exp(-64) of mass.
  const double trunc = std::exp(-64.0) * std::pow(psi, -1.0);
  out.error_bound = std::abs(out.estimate - coarse) + trunc;
  if (!(out.error_bound < tol))
    throw std::runtime_error("convolution_cov_oracle: quadrature did not converge below tolerance");
  return out;
}

}  // namespace circssm
