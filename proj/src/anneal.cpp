// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/anneal.hpp"

#include <cmath>
#include <stdexcept>

#include "circssm/util.hpp"

namespace circssm {

void AnnealConfig::validate() const {
  if (!(init_sigma_g > 0.0) || !(init_sigma_eta > 0.0) || !(proposal_sd > 0.0) || !(temp0 > 0.0))
    throw std::invalid_argument("AnnealConfig: scales must be positive");
  if (!(cooling > 0.0 && cooling < 1.0))
    throw std::invalid_argument("AnnealConfig: cooling factor must be in (0,1)");
  if (n_iter < 0) throw std::invalid_argument("AnnealConfig: n_iter must be nonnegative");
  if (mc_samples < 1) throw std::invalid_argument("AnnealConfig: mc_samples must be >= 1");
}

double integrated_loglik_mc(double sigma_g, double sigma_eta, const Eigen::VectorXd& y,
                            const std::vector<double>& times, const LookupGrid& grid,
                            const PriorSpec& priors, int mc_samples, Rng& rng) {
  if (mc_samples < 1) throw std::invalid_argument("integrated_loglik_mc: mc_samples must be >= 1");
  if (!(sigma_g > 0.0) || !(sigma_eta > 0.0))
    throw std::invalid_argument("integrated_loglik_mc: variances must be positive");
  const int T = static_cast<int>(y.size());
  const LookupGrid g = grid.rebuilt(GpScale(sigma_g));

  const CholFactor beta_f_chol(priors.beta_f_cov, "beta_f prior covariance");
  ModelParams tmpl;
  const std::vector<int> free = tmpl.beta_g_free_indices();
  Eigen::VectorXd free_mean(static_cast<Eigen::Index>(free.size()));
  Eigen::MatrixXd free_cov(static_cast<Eigen::Index>(free.size()),
                           static_cast<Eigen::Index>(free.size()));
  for (std::size_t i = 0; i < free.size(); ++i) {
    free_mean(static_cast<Eigen::Index>(i)) = priors.beta_g_mean(free[i]);
    for (std::size_t j = 0; j < free.size(); ++j)
      free_cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          priors.beta_g_cov(free[i], free[j]);
  }
  const CholFactor beta_g_chol(free_cov, "beta_g prior covariance (free block)");

  std::vector<double> logliks;
  logliks.reserve(static_cast<std::size_t>(mc_samples));
  for (int m = 0; m < mc_samples; ++m) {
    ModelParams p;
    p.beta_f = beta_f_chol.sample(priors.beta_f_mean, rng);
    p.beta_g = priors.beta_g_mean;
    const Eigen::VectorXd bfree = beta_g_chol.sample(free_mean, rng);
    for (std::size_t i = 0; i < free.size(); ++i) p.beta_g(free[i]) = bfree(static_cast<Eigen::Index>(i));
    p.sigma2_eps = priors.sigma2_eps.sample(rng);
    p.sigma2_f = priors.sigma2_f.sample(rng);
    p.sigma2_g = sigma_g * sigma_g;
    p.sigma2_eta = sigma_eta * sigma_eta;
    try {
      auto [path, dz] = sample_latent(T, g, p, priors.x0, rng);
      std::vector<Angle> xs(path.x.begin() + 1, path.x.begin() + 1 + T);
      logliks.push_back(obs_log_density(y, xs, times, p));
    } catch (const std::runtime_error&) {
      logliks.push_back(-std::numeric_limits<double>::infinity());
    }
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logliks) mx = std::max(mx, v);
  if (!std::isfinite(mx))
    throw std::runtime_error(
        "integrated_loglik_mc: every Monte Carlo likelihood underflowed; increase mc_samples");
  double acc = 0.0;
  for (double v : logliks) acc += std::exp(v - mx);
  return mx + std::log(acc / mc_samples);
}

AnnealResult anneal(const Eigen::VectorXd& y, const std::vector<double>& times,
                    const LookupGrid& grid, const PriorSpec& priors, const AnnealConfig& cfg) {
  cfg.validate();
  Rng walk_rng = Rng::substream(cfg.seed, 1);
  // Common random numbers: the same evaluation stream is replayed for every
  // objective call, making the annealing surface deterministic in the seed.
  auto evaluate = [&](double sg, double se) {
    Rng eval_rng = Rng::substream(cfg.seed, 2);
    return integrated_loglik_mc(sg, se, y, times, grid, priors, cfg.mc_samples, eval_rng);
  };

  AnnealResult out;
  double cur_g = cfg.init_sigma_g, cur_e = cfg.init_sigma_eta;
  double cur_ll = evaluate(cur_g, cur_e);
  out.sigma_g_hat = cur_g;
  out.sigma_eta_hat = cur_e;
  out.best_loglik = cur_ll;

  for (int k = 1; k <= cfg.n_iter; ++k) {
    const double temp = cfg.temp0 * std::pow(cfg.cooling, k);
    const double prop_g = cur_g * std::exp(walk_rng.normal(0.0, cfg.proposal_sd));
    const double prop_e = cur_e * std::exp(walk_rng.normal(0.0, cfg.proposal_sd));
    const double prop_ll = evaluate(prop_g, prop_e);
    const double delta = prop_ll - cur_ll;
    bool accepted = false;
    if (delta > 0.0 || walk_rng.uniform() < std::exp(delta / temp)) {
      cur_g = prop_g;
      cur_e = prop_e;
      cur_ll = prop_ll;
      accepted = true;
    }
    if (cur_ll > out.best_loglik) {
      out.best_loglik = cur_ll;
      out.sigma_g_hat = cur_g;
      out.sigma_eta_hat = cur_e;
    }
    out.trace.push_back({k, temp, cur_g, cur_e, cur_ll, out.best_loglik, accepted});
  }
  return out;
}

}  // namespace circssm
