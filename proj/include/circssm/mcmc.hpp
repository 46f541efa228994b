// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "circssm/model.hpp"

namespace circssm {

struct McmcConfig {
  long n_iter = 5000;
  long burn_in = 2500;
  long thin = 1;

  // Proposal tunings; defaults follow the reference settings: sd-scale normal
  // walk with variance 0.05 for sigma_eps/sigma_f, von Mises kappa 3 for x0,
  // a von Mises mixture with kappas (0.5, 3.0) for x_t, and a discrete normal
  // walk with variance 1 for the wrap counters.
  double sd_walk_var = 0.05;
  bool log_scale_variance_walk = false;  // walk on log sigma with Jacobian instead
  double x0_kappa = 3.0;
  std::vector<double> xt_kappas{0.5, 3.0};
  std::vector<double> xt_weights{0.5, 0.5};
  double k_walk_var = 1.0;
  int k_max = kDefaultKMax;

  // sigma2_eta and sigma2_g stay fixed at their supplied (plug-in) values
  // unless this override is set; their posteriors are improper without a
  // bounded prior, so sampling them is opt-in.
  bool sample_evolution_variances = false;

  long self_audit_every = 100;   // full cache recompute + drift check
  long af_rebuild_every = 500;   // periodic full rebuild of the obs matrices
  std::uint64_t seed = 1;

  void validate() const;
};

struct ChainState {
  LatentPath path;
  DzVector dz;
  ModelParams params;
};

struct BlockStats {
  long accepted = 0;
  long proposed = 0;
  double rate() const { return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct SampleSet {
  std::vector<std::string> columns;        // iter, logp, parameters, x_0.., K_1..
  std::vector<std::vector<double>> rows;   // one row per kept draw
  std::map<std::string, BlockStats> acceptance;
  double max_audit_drift = 0.0;
  int T = 0;
};

/// Metropolis-within-Gibbs sweep over every unknown of the model given the
/// plug-in evolution variances. One Sampler instance is one chain; duplicate
/// with distinct seeds for independent chains.
class Sampler {
 public:
  Sampler(Eigen::VectorXd y, std::vector<double> times, LookupGrid grid, PriorSpec priors,
          double sigma2_g, double sigma2_eta, McmcConfig cfg);

  /// Full sweep in fixed order: beta_f, beta_g, sigma2_eps, sigma2_f,
  /// (optional evolution variances), x0, g1, D_z, x_{1:T}, x_{T+1}, K_{1:T+1}.
  void sweep();

  SampleSet run();

  // Individual blocks, public for direct exercise in tests.
  void update_beta_f();
  void update_beta_g();
  void update_sigma2_eps();
  void update_sigma2_f();
  void update_sigma2_eta();
  void update_sigma2_g();
  void update_x0();
  void update_g1();
  void update_dz();
  void update_x_t(int t);
  void update_x_T1();
  void update_K_t(int t);

  /// Joint log density of the current state (the universal target all full
  /// conditionals are derived from). Includes every term that depends on any
  /// sampled unknown.
  double log_joint() const;

  // Gibbs full-conditional moments (what the Gibbs blocks draw from),
  // exposed so the conditionals can be checked against the joint density.
  MomentPair beta_f_conditional() const;
  MomentPair beta_g_free_conditional() const;
  ScalarMoments g1_conditional() const;
  MomentPair dz_conditional() const;
  ScalarMoments x_T1_conditional() const;
  /// Cached (mu_{x_t}, sigma2_{x_t}) of the wrapped transition into x_t, t in 2..T+1.
  ScalarMoments transition_cache(int t) const;

  const ChainState& state() const { return state_; }
  int T() const { return T_; }
  const LookupGrid& grid() const { return grid_; }
  const std::map<std::string, BlockStats>& acceptance() const { return accept_; }
  double max_audit_drift() const { return max_audit_drift_; }

  /// Replace part of the state from outside (tests); rebuilds all caches.
  void set_state(const ChainState& s);

  /// Recompute every cache from scratch and return the largest discrepancy
  /// against the incrementally maintained values.
  double audit_caches();

  double obs_loglik() const { return obs_loglik_; }

 private:
  struct TransEntry {
    Eigen::VectorXd s, a;   // cross-correlation and A^-1 s at (t, x_{t-1})
    Eigen::Vector4d v;      // h_t - H'a
    double u = 0.0;         // a . D_z
    double mu = 0.0;        // u + v . beta_g
    double var = 0.0;       // sigma2_eta + sigma2_g (1 - s.a)
    double gp_var = 0.0;    // sigma2_g (1 - s.a)
  };

  struct ObsCandidate {
    Eigen::VectorXd af_row;
    Eigen::Vector4d h_row;
    Eigen::MatrixXd sigma_y;
    Eigen::LLT<Eigen::MatrixXd> chol;
    double log_det = 0.0;
    double loglik = 0.0;
  };

  TransEntry make_trans_entry(double t, Angle x_prev) const;
  void rebuild_trans(int t);
  void rebuild_all_trans();
  void refresh_trans_means();
  void rebuild_gdz_cache();
  void rebuild_obs();
  double obs_loglik_from(const Eigen::MatrixXd& sigma_y, Eigen::LLT<Eigen::MatrixXd>& chol,
                         double& log_det, const Eigen::MatrixXd& h) const;
  ObsCandidate obs_with_x_changed(int t, Angle x_new) const;
  void commit_obs(int t, Angle x_new, ObsCandidate&& cand);
  double own_term_quad(int t, double x_star) const;  // -(x* - mu)^2 / (2 var)
  double gdz_log_density() const;  // log [D_z | beta_g] + log [g1 | D_z, x0]
  void record_accept(const std::string& block, bool accepted);
  Eigen::VectorXd sample_from_precision(const Eigen::MatrixXd& prec, const Eigen::VectorXd& lin,
                                        const std::string& context);

  Eigen::VectorXd y_;
  std::vector<double> times_;
  LookupGrid grid_;
  PriorSpec priors_;
  McmcConfig cfg_;
  int T_ = 0;
  ChainState state_;
  Rng rng_;

  // Transition cache, valid at indices 2..T+1.
  std::vector<TransEntry> trans_;

  // (D_z, g1) block cache, tied to the current x0.
  Eigen::VectorXd s0_, a0_;
  Eigen::Vector4d hx0_, w0_;
  double c0_ = 1.0;  // Schur complement 1 - s0.a0

  // Observation cache (empty when T == 0).
  Eigen::MatrixXd hf_;       // T x 4 basis rows at (t, x_t)
  Eigen::MatrixXd af_;       // T x T correlation under scale_f
  Eigen::MatrixXd sigma_y_;  // sigma2_f af + sigma2_eps I
  Eigen::LLT<Eigen::MatrixXd> obs_chol_;
  double obs_log_det_ = 0.0;
  double obs_loglik_ = 0.0;

  std::map<std::string, BlockStats> accept_;
  double max_audit_drift_ = 0.0;
  long iter_count_ = 0;
};

/// Build, run and package one chain.
SampleSet run_chain(const Eigen::VectorXd& y, const std::vector<double>& times,
                    const LookupGrid& grid, const PriorSpec& priors, double sigma2_g,
                    double sigma2_eta, const McmcConfig& cfg);

}  // namespace circssm
