// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/model.hpp"

#include <cmath>
#include <stdexcept>

#include "circssm/util.hpp"

namespace circssm {

double InvGammaForm::log_density(double sigma2) const {
  if (!(sigma2 > 0.0)) return -std::numeric_limits<double>::infinity();
  return -0.5 * (alpha + 2.0) * std::log(sigma2) - gamma / (2.0 * sigma2);
}

double InvGammaForm::sample(Rng& rng) const {
  if (!(alpha > 0.0) || !(gamma > 0.0))
    throw std::invalid_argument("InvGammaForm: alpha and gamma must be positive");
  return scale() / rng.gamma(shape());
}

std::vector<int> ModelParams::beta_g_free_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < 4; ++i)
    if (!beta_g_fixed_mask[i]) idx.push_back(i);
  return idx;
}

void ModelParams::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!ok(sigma2_eps) || !ok(sigma2_f) || !ok(sigma2_g))
    throw std::invalid_argument("ModelParams: sigma2_eps, sigma2_f, sigma2_g must be positive");
  if (!(std::isfinite(sigma2_eta) && sigma2_eta >= 0.0))
    throw std::invalid_argument("ModelParams: sigma2_eta must be nonnegative");
  if (!beta_f.allFinite() || !beta_g.allFinite())
    throw std::invalid_argument("ModelParams: non-finite beta");
}

double PriorSpec::log_density_beta_f(const Eigen::Vector4d& b) const {
  const Eigen::Vector4d r = b - beta_f_mean;
  CholFactor chol(beta_f_cov, "beta_f prior covariance");
  return -0.5 * (4.0 * std::log(kTwoPi) + chol.log_det() + r.dot(chol.solve(r)));
}

double PriorSpec::log_density_beta_g_free(const Eigen::Vector4d& b,
                                          const std::array<bool, 4>& mask) const {
  std::vector<int> idx;
  for (int i = 0; i < 4; ++i)
    if (!mask[i]) idx.push_back(i);
  if (idx.empty()) return 0.0;
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd r(m);
  Eigen::MatrixXd cov(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    r(i) = b(idx[i]) - beta_g_mean(idx[i]);
    for (Eigen::Index j = 0; j < m; ++j) cov(i, j) = beta_g_cov(idx[i], idx[j]);
  }
  CholFactor chol(cov, "beta_g prior covariance (free block)");
  return -0.5 * (static_cast<double>(m) * std::log(kTwoPi) + chol.log_det() + r.dot(chol.solve(r)));
}

LookupGrid::LookupGrid(std::vector<LinCircPoint> points, const GpScale& sigma_g)
    : points_(std::move(points)),
      sigma_g_(sigma_g),
      a_(corr_matrix(points_, sigma_g_)),
      chol_(a_, "lookup grid correlation"),
      h_(static_cast<Eigen::Index>(points_.size()), 4) {
  if (points_.size() < 2) throw std::invalid_argument("LookupGrid: need at least 2 points");
  for (Eigen::Index i = 0; i < n(); ++i) h_.row(i) = basis_h(points_[static_cast<std::size_t>(i)]);
  ainv_h_ = chol_.solve(h_);
}

Eigen::VectorXd LookupGrid::cross_corr(const LinCircPoint& p) const {
  Eigen::VectorXd s(n());
  for (Eigen::Index i = 0; i < n(); ++i)
    s(i) = circssm::corr(p, points_[static_cast<std::size_t>(i)], sigma_g_);
  return s;
}

LookupGrid build_grid(int n, double t_lo, double t_hi, GridMode mode, const GpScale& sigma_g,
                      Rng& rng) {
  if (n < 2) throw std::invalid_argument("build_grid: n must be >= 2");
  if (mode == GridMode::time_scaled && !(t_lo < t_hi))
    throw std::invalid_argument("build_grid: t range must satisfy lo < hi");
  const double lo = mode == GridMode::paper_literal ? 0.0 : t_lo;
  const double hi = mode == GridMode::paper_literal ? kTwoPi : t_hi;
  const double width = (hi - lo) / n;
  std::string last_error;
  for (int attempt = 0; attempt < 5; ++attempt) {
    std::vector<LinCircPoint> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double z = (2.0 * i + 1.0) * M_PI / n;  // midpoint of angular subinterval i
      const double t = rng.uniform(lo + i * width, lo + (i + 1) * width);
      pts.emplace_back(t, z);
    }
    try {
      return LookupGrid(std::move(pts), sigma_g);
    } catch (const std::runtime_error& e) {
      last_error = e.what();
    }
  }
  throw std::runtime_error("build_grid: grid factorization failed after 5 attempts: " + last_error);
}

namespace {

// The grid's correlation matrix is bound to the scale it was built with; mixing
// it with a different sigma_g would silently blend two kernels.
void check_grid_scale(const LookupGrid& grid, const ModelParams& p) {
  if (std::abs(grid.scale().sigma2() - p.sigma2_g) >
      1e-12 * std::max(1.0, p.sigma2_g))
    throw std::invalid_argument("lookup grid was built for a different sigma2_g; rebuild it");
}

}  // namespace

MomentPair dz_prior_moments(const LookupGrid& grid, const ModelParams& p) {
  check_grid_scale(grid, p);
  MomentPair out;
  out.mean = grid.basis() * p.beta_g;
  out.cov = p.sigma2_g * grid.corr();
  return out;
}

MomentPair dz_given_g1(const LookupGrid& grid, Angle x0, double g1, const ModelParams& p) {
  check_grid_scale(grid, p);
  const LinCircPoint p0(1.0, x0.value);
  const Eigen::VectorXd s = grid.cross_corr(p0);
  MomentPair out;
  out.mean = grid.basis() * p.beta_g + s * (g1 - basis_h(p0).dot(p.beta_g));
  out.cov = p.sigma2_g * (grid.corr() - s * s.transpose());
  return out;
}

ScalarMoments gstar_conditional(double t, Angle x_prev, const DzVector& dz, const LookupGrid& grid,
                                const ModelParams& p) {
  if (dz.size() != grid.n()) throw std::invalid_argument("gstar_conditional: dz/grid size mismatch");
  check_grid_scale(grid, p);
  const LinCircPoint q(t, x_prev.value);
  const Eigen::VectorXd s = grid.cross_corr(q);
  const Eigen::VectorXd a = grid.chol().solve(s);
  ScalarMoments out;
  out.mean = basis_h(q).dot(p.beta_g) + a.dot(dz - grid.basis() * p.beta_g);
  double one_minus = 1.0 - s.dot(a);
  if (one_minus < -1e-8)
    throw std::runtime_error("gstar_conditional: conditional variance below tolerance");
  if (one_minus < 0.0) one_minus = 0.0;
  out.var = p.sigma2_g * one_minus;
  return out;
}

ScalarMoments transition_moments(double t, Angle x_prev, const DzVector& dz,
                                 const LookupGrid& grid, const ModelParams& p) {
  ScalarMoments g = gstar_conditional(t, x_prev, dz, grid, p);
  g.var += p.sigma2_eta;
  if (!(g.var > 0.0))
    throw std::runtime_error("transition_moments: degenerate wrapped normal (zero variance)");
  return g;
}

MomentPair obs_marginal_moments(const std::vector<Angle>& x, const std::vector<double>& times,
                                const ModelParams& p) {
  if (x.empty() || x.size() != times.size())
    throw std::invalid_argument("obs_marginal_moments: empty input or length mismatch");
  const Eigen::Index T = static_cast<Eigen::Index>(x.size());
  std::vector<LinCircPoint> pts;
  pts.reserve(x.size());
  for (Eigen::Index i = 0; i < T; ++i)
    pts.emplace_back(times[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)].value);
  MomentPair out;
  out.mean.resize(T);
  for (Eigen::Index i = 0; i < T; ++i)
    out.mean(i) = basis_h(pts[static_cast<std::size_t>(i)]).dot(p.beta_f);
  out.cov = p.sigma2_f * corr_matrix(pts, p.scale_f());
  out.cov.diagonal().array() += p.sigma2_eps;
  return out;
}

double obs_log_density(const Eigen::VectorXd& y, const std::vector<Angle>& x,
                       const std::vector<double>& times, const ModelParams& p) {
  const MomentPair m = obs_marginal_moments(x, times, p);
  CholFactor chol(m.cov, "observation covariance");
  return chol.gaussian_log_density(y, m.mean);
}

std::pair<LatentPath, DzVector> sample_latent(int T, const LookupGrid& grid,
                                              const ModelParams& p, const VonMisesParams& x0_prior,
                                              Rng& rng) {
  if (T < 1) throw std::invalid_argument("sample_latent: T must be >= 1");
  LatentPath path(T);
  path.x0 = von_mises_sample(x0_prior, rng);
  const LinCircPoint p0(1.0, path.x0.value);
  path.g1 = rng.normal(basis_h(p0).dot(p.beta_g), std::sqrt(p.sigma2_g));

  auto record = [&](int t, double x_star) {
    // Derive K from the wrapped value so the pair stays consistent at band
    // boundaries: x + 2*pi*K reconstructs the draw to rounding error.
    path.x[t] = Angle::wrap(x_star);
    path.k[t] = static_cast<WrapCounter>(std::llround((x_star - path.x[t].value) / kTwoPi));
    if (std::abs(path.k[t]) > kDefaultKMax)
      warn("sample_latent: wrap counter |K_" + std::to_string(t) + "| exceeds default K_max");
  };

  if (!(p.sigma2_eta >= 0.0)) throw std::invalid_argument("sample_latent: bad sigma2_eta");
  record(1, path.g1 + (p.sigma2_eta > 0.0 ? rng.normal(0.0, std::sqrt(p.sigma2_eta)) : 0.0));

  const MomentPair dzm = dz_given_g1(grid, path.x0, path.g1, p);
  CholFactor dz_chol(dzm.cov, "dz_given_g1 covariance");
  DzVector dz = dz_chol.sample(dzm.mean, rng);

  for (int t = 2; t <= T + 1; ++t) {
    const ScalarMoments tm = transition_moments(static_cast<double>(t), path.x[t - 1], dz, grid, p);
    record(t, tm.mean + rng.normal(0.0, std::sqrt(tm.var)));
  }
  return {std::move(path), std::move(dz)};
}

GeneratedPath generate_path(int T, const LookupGrid& grid, const ModelParams& p,
                            const PriorSpec& prior, Rng& rng) {
  GeneratedPath out;
  auto [path, dz] = sample_latent(T, grid, p, prior.x0, rng);
  out.path = std::move(path);
  out.dz = std::move(dz);
  std::vector<Angle> xs(out.path.x.begin() + 1, out.path.x.begin() + 1 + T);
  std::vector<double> times(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) times[static_cast<std::size_t>(t - 1)] = static_cast<double>(t);
  const MomentPair m = obs_marginal_moments(xs, times, p);
  CholFactor chol(m.cov, "observation covariance");
  out.y = chol.sample(m.mean, rng);
  return out;
}

}  // namespace circssm
