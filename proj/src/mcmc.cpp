// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/mcmc.hpp"

#include <cmath>
#include <stdexcept>

#include "circssm/util.hpp"

namespace circssm {

namespace {

double log_normal_density(double x, double mu, double var) {
  if (!(var > 0.0)) return -std::numeric_limits<double>::infinity();
  const double r = x - mu;
  return -0.5 * (std::log(kTwoPi * var) + r * r / var);
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& a, const std::string& context) {
  CholFactor chol(a, context);
  return chol.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
}

}  // namespace

void McmcConfig::validate() const {
  if (n_iter <= 0 || burn_in < 0 || burn_in >= n_iter)
    throw std::invalid_argument("McmcConfig: need 0 <= burn_in < n_iter");
  if (thin <= 0) throw std::invalid_argument("McmcConfig: thin must be positive");
  if (!(sd_walk_var > 0.0) || !(x0_kappa > 0.0) || !(k_walk_var > 0.0))
    throw std::invalid_argument("McmcConfig: proposal scales must be positive");
  if (xt_kappas.empty() || xt_kappas.size() != xt_weights.size())
    throw std::invalid_argument("McmcConfig: x_t mixture spec invalid");
  if (k_max < 1) throw std::invalid_argument("McmcConfig: k_max must be >= 1");
}

Sampler::Sampler(Eigen::VectorXd y, std::vector<double> times, LookupGrid grid, PriorSpec priors,
                 double sigma2_g, double sigma2_eta, McmcConfig cfg)
    : y_(std::move(y)),
      times_(std::move(times)),
      grid_(std::move(grid)),
      priors_(std::move(priors)),
      cfg_(cfg),
      T_(static_cast<int>(y_.size())),
      state_{LatentPath(static_cast<int>(y_.size())), DzVector(), ModelParams{}},
      rng_(Rng::substream(cfg.seed, 0)) {
  cfg_.validate();
  if (times_.size() != static_cast<std::size_t>(T_))
    throw std::invalid_argument("Sampler: y/times length mismatch");
  if (!(sigma2_g > 0.0) || !(sigma2_eta > 0.0))
    throw std::invalid_argument("Sampler: plug-in variances must be positive");
  if (std::abs(grid_.scale().sigma2() - sigma2_g) > 1e-12 * std::max(1.0, sigma2_g))
    throw std::invalid_argument("Sampler: lookup grid was built for a different sigma2_g");

  // Initialization: regression coefficients at prior means, observation
  // variances at prior modes, x0 at the prior location, x_t uniform on the
  // circle, K_t = 0, then g1 and D_z from their prior conditionals.
  ModelParams& p = state_.params;
  p.beta_f = priors_.beta_f_mean;
  p.beta_g = priors_.beta_g_mean;
  p.sigma2_eps = priors_.sigma2_eps.mode();
  p.sigma2_f = priors_.sigma2_f.mode();
  p.sigma2_g = sigma2_g;
  p.sigma2_eta = sigma2_eta;
  p.validate();

  state_.path = LatentPath(T_);
  state_.path.x0 = Angle::wrap(priors_.x0.mu);
  for (int t = 1; t <= T_ + 1; ++t) {
    state_.path.x[t] = Angle::wrap(kTwoPi * rng_.uniform());
    state_.path.k[t] = 0;
  }
  rebuild_gdz_cache();
  const double g1_mean = hx0_.dot(p.beta_g);
  state_.path.g1 = rng_.normal(g1_mean, std::sqrt(p.sigma2_g));
  const MomentPair dzm = dz_given_g1(grid_, state_.path.x0, state_.path.g1, p);
  CholFactor dz_chol(dzm.cov, "initial D_z covariance");
  state_.dz = dz_chol.sample(dzm.mean, rng_);

  rebuild_all_trans();
  rebuild_obs();

  // Flag wrap-counter support truncation if the initial transition bands carry
  // visible mass beyond |k| <= k_max.
  for (int t = 2; t <= std::min(T_ + 1, 3); ++t) {
    double mass = 0.0;
    for (WrapCounter k = -cfg_.k_max; k <= cfg_.k_max; ++k)
      mass += wrap_weight(k, trans_[static_cast<std::size_t>(t)].mu,
                          std::sqrt(trans_[static_cast<std::size_t>(t)].var));
    if (1.0 - mass > 1e-8)
      warn("Sampler: wrapped-normal tail mass beyond K_max exceeds 1e-8 at t=" + std::to_string(t));
  }
}

Sampler::TransEntry Sampler::make_trans_entry(double t, Angle x_prev) const {
  const ModelParams& p = state_.params;
  TransEntry e;
  const LinCircPoint q(t, x_prev.value);
  e.s = grid_.cross_corr(q);
  e.a = grid_.chol().solve(e.s);
  e.v = basis_h(q) - grid_.basis().transpose() * e.a;
  e.u = e.a.dot(state_.dz);
  e.mu = e.u + e.v.dot(p.beta_g);
  double one_minus = 1.0 - e.s.dot(e.a);
  if (one_minus < -1e-8)
    throw std::runtime_error("Sampler: transition GP variance below tolerance");
  if (one_minus < 0.0) one_minus = 0.0;
  e.gp_var = p.sigma2_g * one_minus;
  e.var = p.sigma2_eta + e.gp_var;
  if (!(e.var > 0.0)) throw std::runtime_error("Sampler: degenerate transition variance");
  return e;
}

void Sampler::rebuild_trans(int t) {
  trans_[static_cast<std::size_t>(t)] =
      make_trans_entry(static_cast<double>(t), state_.path.x[t - 1]);
}

void Sampler::rebuild_all_trans() {
  trans_.assign(static_cast<std::size_t>(T_) + 2, TransEntry{});
  for (int t = 2; t <= T_ + 1; ++t) rebuild_trans(t);
}

void Sampler::refresh_trans_means() {
  const ModelParams& p = state_.params;
  for (int t = 2; t <= T_ + 1; ++t) {
    TransEntry& e = trans_[static_cast<std::size_t>(t)];
    e.u = e.a.dot(state_.dz);
    e.mu = e.u + e.v.dot(p.beta_g);
  }
}

void Sampler::rebuild_gdz_cache() {
  const LinCircPoint p0(1.0, state_.path.x0.value);
  s0_ = grid_.cross_corr(p0);
  a0_ = grid_.chol().solve(s0_);
  hx0_ = basis_h(p0);
  w0_ = hx0_ - grid_.basis().transpose() * a0_;
  c0_ = 1.0 - s0_.dot(a0_);
}

void Sampler::rebuild_obs() {
  if (T_ == 0) {
    obs_loglik_ = 0.0;
    return;
  }
  const ModelParams& p = state_.params;
  hf_.resize(T_, 4);
  std::vector<LinCircPoint> pts;
  pts.reserve(static_cast<std::size_t>(T_));
  for (int i = 0; i < T_; ++i) {
    pts.emplace_back(times_[static_cast<std::size_t>(i)], state_.path.x[i + 1].value);
    hf_.row(i) = basis_h(pts.back());
  }
  af_ = corr_matrix(pts, p.scale_f());
  sigma_y_ = p.sigma2_f * af_;
  sigma_y_.diagonal().array() += p.sigma2_eps;
  obs_loglik_ = obs_loglik_from(sigma_y_, obs_chol_, obs_log_det_, hf_);
}

double Sampler::obs_loglik_from(const Eigen::MatrixXd& sigma_y, Eigen::LLT<Eigen::MatrixXd>& chol,
                                double& log_det, const Eigen::MatrixXd& h) const {
  const double diag_mean = sigma_y.diagonal().mean();
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 6; ++attempt) {
    Eigen::MatrixXd work = sigma_y;
    if (jitter > 0.0) work.diagonal().array() += jitter;
    chol.compute(work);
    if (chol.info() == Eigen::Success) {
      log_det = 2.0 * chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
      const Eigen::VectorXd resid = y_ - h * state_.params.beta_f;
      return -0.5 * (T_ * std::log(kTwoPi) + log_det + resid.dot(chol.solve(resid)));
    }
    jitter = (jitter == 0.0) ? 1e-10 * std::max(diag_mean, 1e-300) : 10.0 * jitter;
  }
  throw std::runtime_error("Sampler: observation covariance factorization failed");
}

Sampler::ObsCandidate Sampler::obs_with_x_changed(int t, Angle x_new) const {
  const ModelParams& p = state_.params;
  const int r = t - 1;
  ObsCandidate c;
  const LinCircPoint pnew(times_[static_cast<std::size_t>(r)], x_new.value);
  const GpScale sf = p.scale_f();
  c.h_row = basis_h(pnew);
  c.af_row.resize(T_);
  for (int i = 0; i < T_; ++i) {
    if (i == r) {
      c.af_row(i) = 1.0;
    } else {
      const LinCircPoint pi(times_[static_cast<std::size_t>(i)], state_.path.x[i + 1].value);
      c.af_row(i) = corr(pnew, pi, sf);
    }
  }
  c.sigma_y = sigma_y_;
  for (int i = 0; i < T_; ++i) {
    const double v = p.sigma2_f * c.af_row(i) + (i == r ? p.sigma2_eps : 0.0);
    c.sigma_y(r, i) = v;
    c.sigma_y(i, r) = v;
  }
  Eigen::MatrixXd h = hf_;
  h.row(r) = c.h_row;
  c.loglik = obs_loglik_from(c.sigma_y, c.chol, c.log_det, h);
  return c;
}

void Sampler::commit_obs(int t, Angle x_new, ObsCandidate&& cand) {
  const int r = t - 1;
  hf_.row(r) = cand.h_row;
  for (int i = 0; i < T_; ++i) {
    af_(r, i) = cand.af_row(i);
    af_(i, r) = cand.af_row(i);
  }
  sigma_y_ = std::move(cand.sigma_y);
  obs_chol_ = std::move(cand.chol);
  obs_log_det_ = cand.log_det;
  obs_loglik_ = cand.loglik;
  state_.path.x[t] = x_new;
}

double Sampler::own_term_quad(int t, double x_star) const {
  if (t == 1) {
    const double r = x_star - state_.path.g1;
    return -0.5 * r * r / state_.params.sigma2_eta;
  }
  const TransEntry& e = trans_[static_cast<std::size_t>(t)];
  const double r = x_star - e.mu;
  return -0.5 * r * r / e.var;
}

double Sampler::gdz_log_density() const {
  // [D_z, g1 | x0, beta_g, sigma2_g] factored as [D_z][g1 | D_z, x0].
  const ModelParams& p = state_.params;
  const Eigen::Index n = grid_.n();
  const Eigen::VectorXd r = state_.dz - grid_.basis() * p.beta_g;
  const double quad = r.dot(grid_.chol().solve(r)) / p.sigma2_g;
  const double dz_term =
      -0.5 * (n * std::log(kTwoPi * p.sigma2_g) + grid_.chol().log_det() + quad);
  const double mu_c = a0_.dot(state_.dz) + w0_.dot(p.beta_g);
  const double var_c = p.sigma2_g * c0_;
  return dz_term + log_normal_density(state_.path.g1, mu_c, var_c);
}

double Sampler::log_joint() const {
  const ModelParams& p = state_.params;
  double lp = priors_.log_density_beta_f(p.beta_f) +
              priors_.log_density_beta_g_free(p.beta_g, p.beta_g_fixed_mask) +
              priors_.sigma2_eps.log_density(p.sigma2_eps) +
              priors_.sigma2_f.log_density(p.sigma2_f);
  if (cfg_.sample_evolution_variances)
    lp += priors_.sigma2_eta.log_density(p.sigma2_eta) +
          priors_.sigma2_g.log_density(p.sigma2_g);
  lp += von_mises_log_density(state_.path.x0, priors_.x0);
  lp += gdz_log_density();
  lp += log_normal_density(state_.path.x_star(1), state_.path.g1, p.sigma2_eta);
  for (int t = 2; t <= T_ + 1; ++t) {
    const TransEntry& e = trans_[static_cast<std::size_t>(t)];
    lp += log_normal_density(state_.path.x_star(t), e.mu, e.var);
  }
  lp += obs_loglik_;
  return lp;
}

void Sampler::record_accept(const std::string& block, bool accepted) {
  BlockStats& s = accept_[block];
  ++s.proposed;
  if (accepted) ++s.accepted;
}

Eigen::VectorXd Sampler::sample_from_precision(const Eigen::MatrixXd& prec,
                                               const Eigen::VectorXd& lin,
                                               const std::string& context) {
  CholFactor chol(prec, context);
  const Eigen::VectorXd mean = chol.solve(lin);
  Eigen::VectorXd z(lin.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng_.normal();
  return mean + chol.llt().matrixU().solve(z);
}

// ---------------------------------------------------------------------------
// Gibbs conditionals
// ---------------------------------------------------------------------------

MomentPair Sampler::beta_f_conditional() const {
  const Eigen::Matrix4d prior_prec = inverse_spd(priors_.beta_f_cov, "beta_f prior covariance");
  Eigen::Matrix4d prec = prior_prec;
  Eigen::Vector4d lin = prior_prec * priors_.beta_f_mean;
  if (T_ > 0) {
    const Eigen::MatrixXd b = obs_chol_.solve(hf_);  // Sigma_y^-1 H
    prec += hf_.transpose() * b;
    lin += b.transpose() * y_;
  }
  MomentPair out;
  out.cov = inverse_spd(prec, "beta_f conditional precision");
  out.mean = out.cov * lin;
  return out;
}

MomentPair Sampler::beta_g_free_conditional() const {
  const ModelParams& p = state_.params;
  const std::vector<int> free = p.beta_g_free_indices();
  const Eigen::Index m = static_cast<Eigen::Index>(free.size());
  if (m == 0) throw std::runtime_error("beta_g conditional: no free components");

  // 4x4 accumulation of the quadratic form before restriction to the free
  // block: the (D_z, g1) joint term plus every wrapped-transition term. The
  // joint inverse uses the Schur complement of A, so only cached pieces enter.
  if (c0_ <= 1e-14)
    throw std::runtime_error("beta_g conditional: singular (D_z, g1) joint covariance");
  Eigen::Matrix4d q4 = (grid_.basis().transpose() * grid_.ainv_basis() +
                        (w0_ * w0_.transpose()) / c0_) /
                       p.sigma2_g;
  const double g1_resid = state_.path.g1 - a0_.dot(state_.dz);
  Eigen::Vector4d l4 =
      (grid_.ainv_basis().transpose() * state_.dz + g1_resid * w0_ / c0_) / p.sigma2_g;
  for (int t = 2; t <= T_ + 1; ++t) {
    const TransEntry& e = trans_[static_cast<std::size_t>(t)];
    q4 += (e.v * e.v.transpose()) / e.var;
    l4 += e.v * (state_.path.x_star(t) - e.u) / e.var;
  }

  // Restrict to the free components, moving fixed ones to the linear side.
  Eigen::MatrixXd prec(m, m);
  Eigen::VectorXd lin(m);
  Eigen::VectorXd prior_mean(m);
  Eigen::MatrixXd prior_cov(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    prior_mean(i) = priors_.beta_g_mean(free[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m; ++j)
      prior_cov(i, j) =
          priors_.beta_g_cov(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
  }
  const Eigen::MatrixXd prior_prec = inverse_spd(prior_cov, "beta_g prior covariance (free block)");
  prec = prior_prec;
  lin = prior_prec * prior_mean;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int fi = free[static_cast<std::size_t>(i)];
    double li = l4(fi);
    for (int j = 0; j < 4; ++j)
      if (p.beta_g_fixed_mask[static_cast<std::size_t>(j)]) li -= q4(fi, j) * p.beta_g(j);
    lin(i) += li;
    for (Eigen::Index j = 0; j < m; ++j) prec(i, j) += q4(fi, free[static_cast<std::size_t>(j)]);
  }
  MomentPair out;
  out.cov = inverse_spd(prec, "beta_g conditional precision");
  out.mean = out.cov * lin;
  return out;
}

ScalarMoments Sampler::g1_conditional() const {
  const ModelParams& p = state_.params;
  const Eigen::MatrixXd sigma_gdz = grid_.corr() - s0_ * s0_.transpose();
  CholFactor chol(sigma_gdz, "Sigma_{g,D_z}");
  const double hb = hx0_.dot(p.beta_g);
  const Eigen::VectorXd dz_star = state_.dz - grid_.basis() * p.beta_g + hb * s0_;
  const Eigen::VectorXd si = chol.solve(s0_);
  const double q = s0_.dot(si);
  const double r = dz_star.dot(si);
  const double prec = 1.0 / p.sigma2_eta + (1.0 + q) / p.sigma2_g;
  ScalarMoments out;
  out.var = 1.0 / prec;
  out.mean = out.var * (state_.path.x_star(1) / p.sigma2_eta + (hb + r) / p.sigma2_g);
  return out;
}

MomentPair Sampler::dz_conditional() const {
  const ModelParams& p = state_.params;
  const Eigen::Index n = grid_.n();
  const Eigen::MatrixXd sigma_gdz = grid_.corr() - s0_ * s0_.transpose();
  CholFactor chol(sigma_gdz, "Sigma_{g,D_z}");
  const Eigen::MatrixXd sinv = chol.solve(Eigen::MatrixXd::Identity(n, n));
  const double hb = hx0_.dot(p.beta_g);
  const Eigen::VectorXd mu_gdz = grid_.basis() * p.beta_g + s0_ * (state_.path.g1 - hb);
  Eigen::MatrixXd prec = sinv / p.sigma2_g;
  Eigen::VectorXd lin = sinv * mu_gdz / p.sigma2_g;
  for (int t = 2; t <= T_ + 1; ++t) {
    const TransEntry& e = trans_[static_cast<std::size_t>(t)];
    prec += (e.a * e.a.transpose()) / e.var;
    lin += e.a * (state_.path.x_star(t) - e.v.dot(p.beta_g)) / e.var;
  }
  MomentPair out;
  out.cov = inverse_spd(prec, "D_z conditional precision");
  out.mean = out.cov * lin;
  return out;
}

ScalarMoments Sampler::x_T1_conditional() const {
  const TransEntry& e = trans_[static_cast<std::size_t>(T_ + 1)];
  return {e.mu, e.var};
}

ScalarMoments Sampler::transition_cache(int t) const {
  if (t < 2 || t > T_ + 1) throw std::invalid_argument("transition_cache: t out of range");
  const TransEntry& e = trans_[static_cast<std::size_t>(t)];
  return {e.mu, e.var};
}

// ---------------------------------------------------------------------------
// Block updates
// ---------------------------------------------------------------------------

void Sampler::update_beta_f() {
  const MomentPair cond = beta_f_conditional();
  CholFactor chol(cond.cov, "beta_f conditional covariance");
  state_.params.beta_f = chol.sample(cond.mean, rng_);
  if (T_ > 0) {
    const Eigen::VectorXd resid = y_ - hf_ * state_.params.beta_f;
    obs_loglik_ = -0.5 * (T_ * std::log(kTwoPi) + obs_log_det_ + resid.dot(obs_chol_.solve(resid)));
  }
  record_accept("beta_f", true);
}

void Sampler::update_beta_g() {
  const ModelParams& p = state_.params;
  const std::vector<int> free = p.beta_g_free_indices();
  const MomentPair cond = beta_g_free_conditional();
  CholFactor chol(cond.cov, "beta_g conditional covariance");
  const Eigen::VectorXd draw = chol.sample(cond.mean, rng_);
  for (std::size_t i = 0; i < free.size(); ++i)
    state_.params.beta_g(free[i]) = draw(static_cast<Eigen::Index>(i));
  refresh_trans_means();
  record_accept("beta_g", true);
}

void Sampler::update_sigma2_eps() {
  ModelParams& p = state_.params;
  const double sd = std::sqrt(p.sigma2_eps);
  double sd_new, jac = 0.0;
  if (cfg_.log_scale_variance_walk) {
    sd_new = sd * std::exp(rng_.normal(0.0, std::sqrt(cfg_.sd_walk_var)));
    jac = 2.0 * (std::log(sd_new) - std::log(sd));  // d sigma2 / d log sigma
  } else {
    sd_new = sd + rng_.normal(0.0, std::sqrt(cfg_.sd_walk_var));
  }
  if (!(sd_new > 0.0)) {
    record_accept("sigma2_eps", false);
    return;
  }
  const double s2_new = sd_new * sd_new;
  Eigen::MatrixXd sigma_y_cand;
  Eigen::LLT<Eigen::MatrixXd> chol_cand;
  double log_det_cand = 0.0, loglik_cand = 0.0;
  if (T_ > 0) {
    sigma_y_cand = p.sigma2_f * af_;
    sigma_y_cand.diagonal().array() += s2_new;
    loglik_cand = obs_loglik_from(sigma_y_cand, chol_cand, log_det_cand, hf_);
  }
  const double delta = priors_.sigma2_eps.log_density(s2_new) -
                       priors_.sigma2_eps.log_density(p.sigma2_eps) + loglik_cand - obs_loglik_ +
                       jac;
  if (std::log(rng_.uniform() + 1e-300) < delta) {
    p.sigma2_eps = s2_new;
    if (T_ > 0) {
      sigma_y_ = std::move(sigma_y_cand);
      obs_chol_ = std::move(chol_cand);
      obs_log_det_ = log_det_cand;
      obs_loglik_ = loglik_cand;
    }
    record_accept("sigma2_eps", true);
  } else {
    record_accept("sigma2_eps", false);
  }
}

void Sampler::update_sigma2_f() {
  ModelParams& p = state_.params;
  const double sd = std::sqrt(p.sigma2_f);
  double sd_new, jac = 0.0;
  if (cfg_.log_scale_variance_walk) {
    sd_new = sd * std::exp(rng_.normal(0.0, std::sqrt(cfg_.sd_walk_var)));
    jac = 2.0 * (std::log(sd_new) - std::log(sd));
  } else {
    sd_new = sd + rng_.normal(0.0, std::sqrt(cfg_.sd_walk_var));
  }
  if (!(sd_new > 0.0)) {
    record_accept("sigma2_f", false);
    return;
  }
  const double s2_new = sd_new * sd_new;
  // sigma_f enters the correlation kernel itself, so A_f must be rebuilt.
  Eigen::MatrixXd af_cand;
  Eigen::MatrixXd sigma_y_cand;
  Eigen::LLT<Eigen::MatrixXd> chol_cand;
  double log_det_cand = 0.0, loglik_cand = 0.0;
  if (T_ > 0) {
    std::vector<LinCircPoint> pts;
    pts.reserve(static_cast<std::size_t>(T_));
    for (int i = 0; i < T_; ++i)
      pts.emplace_back(times_[static_cast<std::size_t>(i)], state_.path.x[i + 1].value);
    af_cand = corr_matrix(pts, GpScale(sd_new));
    sigma_y_cand = s2_new * af_cand;
    sigma_y_cand.diagonal().array() += p.sigma2_eps;
    loglik_cand = obs_loglik_from(sigma_y_cand, chol_cand, log_det_cand, hf_);
  }
  const double delta = priors_.sigma2_f.log_density(s2_new) -
                       priors_.sigma2_f.log_density(p.sigma2_f) + loglik_cand - obs_loglik_ + jac;
  if (std::log(rng_.uniform() + 1e-300) < delta) {
    p.sigma2_f = s2_new;
    if (T_ > 0) {
      af_ = std::move(af_cand);
      sigma_y_ = std::move(sigma_y_cand);
      obs_chol_ = std::move(chol_cand);
      obs_log_det_ = log_det_cand;
      obs_loglik_ = loglik_cand;
    }
    record_accept("sigma2_f", true);
  } else {
    record_accept("sigma2_f", false);
  }
}

void Sampler::update_sigma2_eta() {
  ModelParams& p = state_.params;
  const double sd = std::sqrt(p.sigma2_eta);
  const double sd_new = sd + rng_.normal(0.0, std::sqrt(cfg_.sd_walk_var));
  if (!(sd_new > 0.0)) {
    record_accept("sigma2_eta", false);
    return;
  }
  const double s2_new = sd_new * sd_new;
  double delta = priors_.sigma2_eta.log_density(s2_new) -
                 priors_.sigma2_eta.log_density(p.sigma2_eta);
  delta += log_normal_density(state_.path.x_star(1), state_.path.g1, s2_new) -
           log_normal_density(state_.path.x_star(1), state_.path.g1, p.sigma2_eta);
  for (int t = 2; t <= T_ + 1; ++t) {
    const TransEntry& e = trans_[static_cast<std::size_t>(t)];
    delta += log_normal_density(state_.path.x_star(t), e.mu, s2_new + e.gp_var) -
             log_normal_density(state_.path.x_star(t), e.mu, e.var);
  }
  if (std::log(rng_.uniform() + 1e-300) < delta) {
    p.sigma2_eta = s2_new;
    for (int t = 2; t <= T_ + 1; ++t) {
      TransEntry& e = trans_[static_cast<std::size_t>(t)];
      e.var = s2_new + e.gp_var;
    }
    record_accept("sigma2_eta", true);
  } else {
    record_accept("sigma2_eta", false);
  }
}

void Sampler::update_sigma2_g() {
  ModelParams& p = state_.params;
  const double sd = std::sqrt(p.sigma2_g);
  const double sd_new = sd + rng_.normal(0.0, std::sqrt(cfg_.sd_walk_var));
  if (!(sd_new > 0.0)) {
    record_accept("sigma2_g", false);
    return;
  }
  const double s2_new = sd_new * sd_new;
  // sigma_g reshapes the grid correlation matrix; evaluate the candidate
  // against a rebuilt grid, non-incrementally.
  LookupGrid grid_cand = grid_.rebuilt(GpScale(sd_new));
  ModelParams p_cand = p;
  p_cand.sigma2_g = s2_new;

  auto block_terms = [this](const LookupGrid& grid, const ModelParams& params) {
    const LinCircPoint p0(1.0, state_.path.x0.value);
    const Eigen::VectorXd s0 = grid.cross_corr(p0);
    const Eigen::VectorXd a0 = grid.chol().solve(s0);
    const Eigen::VectorXd r = state_.dz - grid.basis() * params.beta_g;
    const double quad = r.dot(grid.chol().solve(r)) / params.sigma2_g;
    double lp = -0.5 * (grid.n() * std::log(kTwoPi * params.sigma2_g) + grid.chol().log_det() +
                        quad);
    const double mu_c = a0.dot(state_.dz) +
                        (basis_h(p0) - grid.basis().transpose() * a0).dot(params.beta_g);
    lp += log_normal_density(state_.path.g1, mu_c, params.sigma2_g * (1.0 - s0.dot(a0)));
    for (int t = 2; t <= T_ + 1; ++t) {
      const ScalarMoments tm =
          transition_moments(static_cast<double>(t), state_.path.x[t - 1], state_.dz, grid, params);
      lp += log_normal_density(state_.path.x_star(t), tm.mean, tm.var);
    }
    return lp;
  };

  const double delta = priors_.sigma2_g.log_density(s2_new) -
                       priors_.sigma2_g.log_density(p.sigma2_g) + block_terms(grid_cand, p_cand) -
                       block_terms(grid_, p);
  if (std::log(rng_.uniform() + 1e-300) < delta) {
    p.sigma2_g = s2_new;
    grid_ = std::move(grid_cand);
    rebuild_gdz_cache();
    rebuild_all_trans();
    record_accept("sigma2_g", true);
  } else {
    record_accept("sigma2_g", false);
  }
}

void Sampler::update_x0() {
  const ModelParams& p = state_.params;
  const Angle cand = von_mises_sample({state_.path.x0.value, cfg_.x0_kappa}, rng_);
  const LinCircPoint p0(1.0, cand.value);
  const Eigen::VectorXd s0 = grid_.cross_corr(p0);
  const Eigen::VectorXd a0 = grid_.chol().solve(s0);
  const Eigen::Vector4d hx0 = basis_h(p0);
  const Eigen::Vector4d w0 = hx0 - grid_.basis().transpose() * a0;
  const double c0 = 1.0 - s0.dot(a0);

  const double mu_new = a0.dot(state_.dz) + w0.dot(p.beta_g);
  const double mu_cur = a0_.dot(state_.dz) + w0_.dot(p.beta_g);
  const double delta = von_mises_log_density(cand, priors_.x0) -
                       von_mises_log_density(state_.path.x0, priors_.x0) +
                       log_normal_density(state_.path.g1, mu_new, p.sigma2_g * c0) -
                       log_normal_density(state_.path.g1, mu_cur, p.sigma2_g * c0_);
  if (std::log(rng_.uniform() + 1e-300) < delta) {
    state_.path.x0 = cand;
    s0_ = s0;
    a0_ = a0;
    hx0_ = hx0;
    w0_ = w0;
    c0_ = c0;
    record_accept("x0", true);
  } else {
    record_accept("x0", false);
  }
}

void Sampler::update_g1() {
  const ScalarMoments cond = g1_conditional();
  state_.path.g1 = rng_.normal(cond.mean, std::sqrt(cond.var));
  record_accept("g1", true);
}

void Sampler::update_dz() {
  const MomentPair cond = dz_conditional();
  CholFactor chol(cond.cov, "D_z conditional covariance");
  state_.dz = chol.sample(cond.mean, rng_);
  refresh_trans_means();
  record_accept("dz", true);
}

void Sampler::update_x_t(int t) {
  if (t < 1 || t > T_) throw std::invalid_argument("update_x_t: t out of range");
  const Angle cand =
      von_mises_mixture_sample(state_.path.x[t], cfg_.xt_kappas, cfg_.xt_weights, rng_);
  const double x_star_cand = cand.value + kTwoPi * static_cast<double>(state_.path.k[t]);

  double delta = own_term_quad(t, x_star_cand) - own_term_quad(t, state_.path.x_star(t));

  // Next transition: both its mean and its variance move with x_t.
  const TransEntry next_cand = make_trans_entry(static_cast<double>(t + 1), cand);
  const TransEntry& next_cur = trans_[static_cast<std::size_t>(t + 1)];
  delta += log_normal_density(state_.path.x_star(t + 1), next_cand.mu, next_cand.var) -
           log_normal_density(state_.path.x_star(t + 1), next_cur.mu, next_cur.var);

  ObsCandidate obs_cand = obs_with_x_changed(t, cand);
  delta += obs_cand.loglik - obs_loglik_;

  if (std::log(rng_.uniform() + 1e-300) < delta) {
    commit_obs(t, cand, std::move(obs_cand));
    trans_[static_cast<std::size_t>(t + 1)] = next_cand;
    record_accept("x_t", true);
  } else {
    record_accept("x_t", false);
  }
}

void Sampler::update_x_T1() {
  const TransEntry& e = trans_[static_cast<std::size_t>(T_ + 1)];
  if (!(e.var > 0.0)) throw std::runtime_error("update_x_T1: degenerate variance");
  const double lo = kTwoPi * static_cast<double>(state_.path.k[T_ + 1]);
  const double hi = lo + kTwoPi;
  const double x_star = truncated_normal_sample(e.mu, std::sqrt(e.var), lo, hi, rng_);
  double xv = x_star - lo;
  if (xv >= kTwoPi) xv = std::nextafter(kTwoPi, 0.0);
  if (xv < 0.0) xv = 0.0;
  state_.path.x[T_ + 1] = Angle::wrap(xv);
  record_accept("x_T1", true);
}

void Sampler::update_K_t(int t) {
  if (t < 1 || t > T_ + 1) throw std::invalid_argument("update_K_t: t out of range");
  const WrapCounter cand = discrete_rw_propose(state_.path.k[t], cfg_.k_walk_var, rng_);
  if (std::abs(cand) > cfg_.k_max) {
    record_accept("K_t", false);
    return;
  }
  const double x_star_cand = state_.path.x[t].value + kTwoPi * static_cast<double>(cand);
  const double delta = own_term_quad(t, x_star_cand) - own_term_quad(t, state_.path.x_star(t));
  if (std::log(rng_.uniform() + 1e-300) < delta) {
    state_.path.k[t] = cand;
    record_accept("K_t", true);
  } else {
    record_accept("K_t", false);
  }
}

void Sampler::sweep() {
  update_beta_f();
  update_beta_g();
  update_sigma2_eps();
  update_sigma2_f();
  if (cfg_.sample_evolution_variances) {
    update_sigma2_eta();
    update_sigma2_g();
  }
  update_x0();
  update_g1();
  update_dz();
  for (int t = 1; t <= T_; ++t) update_x_t(t);
  update_x_T1();
  for (int t = 1; t <= T_ + 1; ++t) update_K_t(t);
}

double Sampler::audit_caches() {
  double drift = 0.0;
  for (int t = 2; t <= T_ + 1; ++t) {
    const TransEntry fresh = make_trans_entry(static_cast<double>(t), state_.path.x[t - 1]);
    const TransEntry& e = trans_[static_cast<std::size_t>(t)];
    drift = std::max(drift, std::abs(fresh.mu - e.mu));
    drift = std::max(drift, std::abs(fresh.var - e.var));
    trans_[static_cast<std::size_t>(t)] = fresh;
  }
  const double old_loglik = obs_loglik_;
  rebuild_obs();
  drift = std::max(drift, std::abs(old_loglik - obs_loglik_));
  max_audit_drift_ = std::max(max_audit_drift_, drift);
  return drift;
}

void Sampler::set_state(const ChainState& s) {
  if (s.path.T() != T_) throw std::invalid_argument("set_state: path length mismatch");
  if (s.dz.size() != grid_.n()) throw std::invalid_argument("set_state: dz length mismatch");
  state_ = s;
  state_.params.validate();
  rebuild_gdz_cache();
  rebuild_all_trans();
  rebuild_obs();
}

SampleSet Sampler::run() {
  SampleSet out;
  out.T = T_;
  const std::vector<int> free = state_.params.beta_g_free_indices();
  out.columns = {"iter", "logp"};
  for (int i = 1; i <= 4; ++i) out.columns.push_back("beta_f_" + std::to_string(i));
  for (int f : free) out.columns.push_back("beta_g_" + std::to_string(f + 1));
  out.columns.push_back("sigma2_eps");
  out.columns.push_back("sigma2_f");
  for (int t = 0; t <= T_ + 1; ++t) out.columns.push_back("x_" + std::to_string(t));
  for (int t = 1; t <= T_ + 1; ++t) out.columns.push_back("K_" + std::to_string(t));

  for (long iter = 1; iter <= cfg_.n_iter; ++iter) {
    sweep();
    ++iter_count_;
    if (cfg_.af_rebuild_every > 0 && iter % cfg_.af_rebuild_every == 0) rebuild_obs();
    if (cfg_.self_audit_every > 0 && iter % cfg_.self_audit_every == 0) audit_caches();
    if (iter > cfg_.burn_in && (iter - cfg_.burn_in - 1) % cfg_.thin == 0) {
      std::vector<double> row;
      row.reserve(out.columns.size());
      row.push_back(static_cast<double>(iter));
      const double lp = log_joint();
      if (!std::isfinite(lp))
        throw std::runtime_error("run_chain: non-finite joint log density at iteration " +
                                 std::to_string(iter));
      row.push_back(lp);
      for (int i = 0; i < 4; ++i) row.push_back(state_.params.beta_f(i));
      for (int f : free) row.push_back(state_.params.beta_g(f));
      row.push_back(state_.params.sigma2_eps);
      row.push_back(state_.params.sigma2_f);
      row.push_back(state_.path.x0.value);
      for (int t = 1; t <= T_ + 1; ++t) row.push_back(state_.path.x[t].value);
      for (int t = 1; t <= T_ + 1; ++t) row.push_back(static_cast<double>(state_.path.k[t]));
      out.rows.push_back(std::move(row));
    }
  }
  out.acceptance = accept_;
  out.max_audit_drift = max_audit_drift_;
  return out;
}

SampleSet run_chain(const Eigen::VectorXd& y, const std::vector<double>& times,
                    const LookupGrid& grid, const PriorSpec& priors, double sigma2_g,
                    double sigma2_eta, const McmcConfig& cfg) {
  if (y.size() == 0) throw std::invalid_argument("run_chain: empty dataset");
  Sampler sampler(y, times, grid, priors, sigma2_g, sigma2_eta, cfg);
  return sampler.run();
}

}  // namespace circssm
