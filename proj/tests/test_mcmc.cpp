// Apache License, Version 2.0, refer to LICENSE.txt
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>

#include "circssm/mcmc.hpp"
#include "circssm/util.hpp"
#include "support.hpp"

using namespace circssm;

namespace {

// A healthy time decay keeps the grid correlation well conditioned; the
// angular cosine kernel alone is rank 2.
constexpr double kSigma2G = 0.25;  // grid scale 0.5
constexpr double kSigma2Eta = 0.04;

PriorSpec tiny_priors() {
  PriorSpec pr;
  pr.x0 = {M_PI, 1.0};
  pr.beta_g_mean = {2.5, 0.04, 1.0, 1.0};
  return pr;
}

struct Tiny {
  std::unique_ptr<Sampler> sampler;
  PriorSpec priors;
  Eigen::VectorXd y;
  std::vector<double> times;
  std::unique_ptr<LookupGrid> grid;
};

// A small instance with a randomized, generic state.
Tiny make_tiny(int T, int n, std::uint64_t seed, double sigma2_eta = kSigma2Eta) {
  Tiny out;
  out.priors = tiny_priors();
  Rng rng(seed);
  out.y.resize(T);
  for (int i = 0; i < T; ++i) {
    out.y(i) = rng.normal(0.0, 1.0);
    out.times.push_back(static_cast<double>(i + 1));
  }
  Rng grid_rng(seed ^ 0xabc);
  out.grid = std::make_unique<LookupGrid>(build_grid(n, 1.0, static_cast<double>(T) + 4.0,
                                                     GridMode::time_scaled,
                                                     GpScale(std::sqrt(kSigma2G)), grid_rng));
  McmcConfig cfg;
  cfg.seed = seed;
  cfg.n_iter = 10;
  cfg.burn_in = 5;
  out.sampler = std::make_unique<Sampler>(out.y, out.times, *out.grid, out.priors, kSigma2G,
                                          sigma2_eta, cfg);

  ChainState s = out.sampler->state();
  s.path.x0 = Angle::wrap(rng.uniform(0.0, kTwoPi));
  for (int t = 1; t <= T + 1; ++t) {
    s.path.x[t] = Angle::wrap(rng.uniform(0.0, kTwoPi));
    s.path.k[t] = static_cast<WrapCounter>(std::floor(rng.uniform(-1.5, 2.5)));
  }
  s.path.g1 = rng.normal(2.5, 1.0);
  for (Eigen::Index i = 0; i < s.dz.size(); ++i) s.dz(i) = rng.normal(2.5, 0.7);
  s.params.beta_f = Eigen::Vector4d{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  s.params.beta_g(0) = rng.normal(2.5, 0.5);
  s.params.beta_g(1) = rng.normal(0.04, 0.05);
  s.params.sigma2_eps = rng.uniform(0.005, 0.05);
  s.params.sigma2_f = rng.uniform(0.02, 0.2);
  out.sampler->set_state(s);
  return out;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const Eigen::VectorXd r = x - mean;
  return -0.5 * (x.size() * std::log(kTwoPi) + ldlt.vectorD().array().log().sum() +
                 r.dot(ldlt.solve(r)));
}

double normal_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (std::log(kTwoPi * var) + r * r / var);
}

}  // namespace

TEST_CASE("Gibbs conditionals pass the joint-density ratio test") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 97);
    const int T = 2 + static_cast<int>(seed % 3);  // 2..4
    const int n = 3 + static_cast<int>(seed % 2);  // 3..4
    Tiny tc = make_tiny(T, n, seed);
    Sampler& smp = *tc.sampler;
    const ChainState base = smp.state();

    SUBCASE("") {}  // keep each seed a fresh instance

    {  // beta_f
      const MomentPair cond = smp.beta_f_conditional();
      const double lp1 = smp.log_joint();
      const double lc1 = mvn_logpdf(base.params.beta_f, cond.mean, cond.cov);
      ChainState s2 = base;
      for (int i = 0; i < 4; ++i) s2.params.beta_f(i) += rng.normal(0.0, 0.5);
      smp.set_state(s2);
      const double lp2 = smp.log_joint();
      const double lc2 = mvn_logpdf(s2.params.beta_f, cond.mean, cond.cov);
      CHECK(std::abs((lc2 - lc1) - (lp2 - lp1)) < 1e-8);
      smp.set_state(base);
    }

    {  // beta_g free components
      const MomentPair cond = smp.beta_g_free_conditional();
      const Eigen::Vector2d v1{base.params.beta_g(0), base.params.beta_g(1)};
      const double lp1 = smp.log_joint();
      const double lc1 = mvn_logpdf(v1, cond.mean, cond.cov);
      ChainState s2 = base;
      s2.params.beta_g(0) += rng.normal(0.0, 0.4);
      s2.params.beta_g(1) += rng.normal(0.0, 0.1);
      smp.set_state(s2);
      const Eigen::Vector2d v2{s2.params.beta_g(0), s2.params.beta_g(1)};
      const double lp2 = smp.log_joint();
      const double lc2 = mvn_logpdf(v2, cond.mean, cond.cov);
      CHECK(std::abs((lc2 - lc1) - (lp2 - lp1)) < 1e-8);
      smp.set_state(base);
    }

    {  // g1
      const ScalarMoments cond = smp.g1_conditional();
      const double lp1 = smp.log_joint();
      const double lc1 = normal_logpdf(base.path.g1, cond.mean, cond.var);
      ChainState s2 = base;
      s2.path.g1 += rng.normal(0.0, 1.0);
      smp.set_state(s2);
      const double lp2 = smp.log_joint();
      const double lc2 = normal_logpdf(s2.path.g1, cond.mean, cond.var);
      CHECK(std::abs((lc2 - lc1) - (lp2 - lp1)) < 1e-8);
      smp.set_state(base);
    }

    {  // D_z
      const MomentPair cond = smp.dz_conditional();
      const double lp1 = smp.log_joint();
      const double lc1 = mvn_logpdf(base.dz, cond.mean, cond.cov);
      ChainState s2 = base;
      for (Eigen::Index i = 0; i < s2.dz.size(); ++i) s2.dz(i) += rng.normal(0.0, 0.5);
      smp.set_state(s2);
      const double lp2 = smp.log_joint();
      const double lc2 = mvn_logpdf(s2.dz, cond.mean, cond.cov);
      CHECK(std::abs((lc2 - lc1) - (lp2 - lp1)) < 1e-8);
      smp.set_state(base);
    }

    {  // x_{T+1}: same band, truncated-normal numerator
      const ScalarMoments cond = smp.x_T1_conditional();
      const double lp1 = smp.log_joint();
      const double lc1 = normal_logpdf(base.path.x_star(T + 1), cond.mean, cond.var);
      ChainState s2 = base;
      s2.path.x[T + 1] = Angle::wrap(rng.uniform(0.0, kTwoPi));
      smp.set_state(s2);
      const double lp2 = smp.log_joint();
      const double lc2 = normal_logpdf(s2.path.x_star(T + 1), cond.mean, cond.var);
      CHECK(std::abs((lc2 - lc1) - (lp2 - lp1)) < 1e-8);
      smp.set_state(base);
    }
  }
}

TEST_CASE("MH targets pass the joint-density ratio test") {
  for (std::uint64_t seed = 11; seed <= 13; ++seed) {
    Rng rng(seed * 131);
    const int T = 3;
    Tiny tc = make_tiny(T, 4, seed);
    Sampler& smp = *tc.sampler;
    const ChainState base = smp.state();

    auto joint_diff = [&](const ChainState& s2) {
      smp.set_state(base);
      const double lp1 = smp.log_joint();
      smp.set_state(s2);
      const double lp2 = smp.log_joint();
      smp.set_state(base);
      return lp2 - lp1;
    };

    {  // sigma2_eps target: prior x observation likelihood
      ChainState s2 = base;
      s2.params.sigma2_eps = base.params.sigma2_eps * rng.uniform(0.5, 2.0);
      std::vector<Angle> xs(base.path.x.begin() + 1, base.path.x.begin() + 1 + T);
      auto target = [&](const ChainState& s) {
        return tc.priors.sigma2_eps.log_density(s.params.sigma2_eps) +
               obs_log_density(tc.y, xs, tc.times, s.params);
      };
      CHECK(std::abs((target(s2) - target(base)) - joint_diff(s2)) < 1e-8);
    }

    {  // sigma2_f target
      ChainState s2 = base;
      s2.params.sigma2_f = base.params.sigma2_f * rng.uniform(0.5, 2.0);
      std::vector<Angle> xs(base.path.x.begin() + 1, base.path.x.begin() + 1 + T);
      auto target = [&](const ChainState& s) {
        return tc.priors.sigma2_f.log_density(s.params.sigma2_f) +
               obs_log_density(tc.y, xs, tc.times, s.params);
      };
      CHECK(std::abs((target(s2) - target(base)) - joint_diff(s2)) < 1e-8);
    }

    {  // x0 target: prior x joint normal of (D_z, g1)
      ChainState s2 = base;
      s2.path.x0 = Angle::wrap(rng.uniform(0.0, kTwoPi));
      auto target = [&](const ChainState& s) {
        const Eigen::Index n = tc.grid->n();
        const LinCircPoint p0(1.0, s.path.x0.value);
        const Eigen::VectorXd sv = tc.grid->cross_corr(p0);
        Eigen::VectorXd mu(n + 1);
        Eigen::MatrixXd sig(n + 1, n + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
          mu(i) = basis_h(tc.grid->points()[static_cast<std::size_t>(i)]).dot(s.params.beta_g);
          for (Eigen::Index j = 0; j < n; ++j) sig(i, j) = kSigma2G * tc.grid->corr()(i, j);
          sig(i, n) = kSigma2G * sv(i);
          sig(n, i) = sig(i, n);
        }
        mu(n) = basis_h(p0).dot(s.params.beta_g);
        sig(n, n) = kSigma2G;
        Eigen::VectorXd v(n + 1);
        v.head(n) = s.dz;
        v(n) = s.path.g1;
        return von_mises_log_density(s.path.x0, tc.priors.x0) + mvn_logpdf(v, mu, sig);
      };
      CHECK(std::abs((target(s2) - target(base)) - joint_diff(s2)) < 1e-8);
    }

    {  // x_t target: own numerator, next transition, observation likelihood
      const int t = 2;
      ChainState s2 = base;
      s2.path.x[t] = Angle::wrap(rng.uniform(0.0, kTwoPi));
      auto target = [&](const ChainState& s) {
        const ScalarMoments own = transition_moments(static_cast<double>(t), s.path.x[t - 1],
                                                     s.dz, *tc.grid, s.params);
        const ScalarMoments next = transition_moments(static_cast<double>(t + 1), s.path.x[t],
                                                      s.dz, *tc.grid, s.params);
        std::vector<Angle> xs(s.path.x.begin() + 1, s.path.x.begin() + 1 + T);
        return normal_logpdf(s.path.x_star(t), own.mean, own.var) +
               normal_logpdf(s.path.x_star(t + 1), next.mean, next.var) +
               obs_log_density(tc.y, xs, tc.times, s.params);
      };
      CHECK(std::abs((target(s2) - target(base)) - joint_diff(s2)) < 1e-8);
    }

    {  // K_t target: own truncated-normal numerator
      const int t = 2;
      ChainState s2 = base;
      s2.path.k[t] = base.path.k[t] + 1;
      auto target = [&](const ChainState& s) {
        const ScalarMoments own = transition_moments(static_cast<double>(t), s.path.x[t - 1],
                                                     s.dz, *tc.grid, s.params);
        const double r = s.path.x_star(t) - own.mean;
        return -0.5 * r * r / own.var;
      };
      CHECK(std::abs((target(s2) - target(base)) - joint_diff(s2)) < 1e-8);
    }
  }
}

TEST_CASE("beta_f update limits") {
  SUBCASE("prior-dominated when the likelihood precision vanishes") {
    Tiny tc = make_tiny(3, 3, 5);
    ChainState s = tc.sampler->state();
    s.params.sigma2_eps = 1e12;
    s.params.sigma2_f = 1e-6;
    tc.sampler->set_state(s);
    const MomentPair cond = tc.sampler->beta_f_conditional();
    CHECK((cond.mean - tc.priors.beta_f_mean).lpNorm<Eigen::Infinity>() < 1e-4);
    CHECK((cond.cov - tc.priors.beta_f_cov).lpNorm<Eigen::Infinity>() < 1e-4);
  }
  SUBCASE("point-mass prior pins the draw") {
    Tiny tc = make_tiny(3, 3, 6);
    Eigen::Vector4d pinned{0.7, -0.3, 0.2, 0.9};
    tc.priors.beta_f_mean = pinned;
    tc.priors.beta_f_cov = 1e-12 * Eigen::Matrix4d::Identity();
    McmcConfig cfg;
    cfg.seed = 6;
    Sampler smp(tc.y, tc.times, *tc.grid, tc.priors, kSigma2G, kSigma2Eta, cfg);
    for (int i = 0; i < 20; ++i) {
      smp.update_beta_f();
      CHECK((smp.state().params.beta_f - pinned).lpNorm<Eigen::Infinity>() < 1e-4);
    }
  }
}

TEST_CASE("beta_g update: mask fixed bit-exactly, T = 0 conjugate oracle") {
  SUBCASE("masked components never move") {
    Tiny tc = make_tiny(4, 4, 7);
    const double f2 = tc.sampler->state().params.beta_g(2);
    const double f3 = tc.sampler->state().params.beta_g(3);
    for (int i = 0; i < 50; ++i) {
      tc.sampler->update_beta_g();
      CHECK(tc.sampler->state().params.beta_g(2) == f2);
      CHECK(tc.sampler->state().params.beta_g(3) == f3);
    }
  }

  SUBCASE("T = 0: posterior from prior and the (D_z, g1) block alone") {
    PriorSpec pr = tiny_priors();
    Eigen::VectorXd y(0);
    std::vector<double> times;
    Rng grid_rng(99);
    LookupGrid grid =
        build_grid(3, 1.0, 6.0, GridMode::time_scaled, GpScale(std::sqrt(kSigma2G)), grid_rng);
    McmcConfig cfg;
    cfg.seed = 8;
    Sampler smp(y, times, grid, pr, kSigma2G, kSigma2Eta, cfg);
    const ChainState s = smp.state();
    const MomentPair cond = smp.beta_g_free_conditional();

    // Conjugate-normal oracle over the free block: d = (D_z, g1) observed,
    // d ~ N(M beta_g, sigma2_g * Sigma_joint).
    const Eigen::Index n = grid.n();
    const LinCircPoint p0(1.0, s.path.x0.value);
    const Eigen::VectorXd sv = grid.cross_corr(p0);
    Eigen::MatrixXd sig(n + 1, n + 1);
    Eigen::MatrixXd M(n + 1, 4);
    Eigen::VectorXd d(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      M.row(i) = basis_h(grid.points()[static_cast<std::size_t>(i)]);
      d(i) = s.dz(i);
      for (Eigen::Index j = 0; j < n; ++j) sig(i, j) = kSigma2G * grid.corr()(i, j);
      sig(i, n) = kSigma2G * sv(i);
      sig(n, i) = sig(i, n);
    }
    M.row(n) = basis_h(p0);
    d(n) = s.path.g1;
    sig(n, n) = kSigma2G;
    const Eigen::MatrixXd sig_inv = sig.ldlt().solve(Eigen::MatrixXd::Identity(n + 1, n + 1));
    const Eigen::MatrixXd Mf = M.leftCols(2);
    const Eigen::VectorXd d_adj = d - M.rightCols(2) * s.params.beta_g.tail(2);
    const Eigen::Matrix2d prior_prec =
        pr.beta_g_cov.topLeftCorner(2, 2).ldlt().solve(Eigen::Matrix2d::Identity());
    const Eigen::Matrix2d prec = prior_prec + Mf.transpose() * sig_inv * Mf;
    const Eigen::Vector2d lin =
        prior_prec * pr.beta_g_mean.head(2) + Mf.transpose() * sig_inv * d_adj;
    const Eigen::Matrix2d cov_oracle = prec.ldlt().solve(Eigen::Matrix2d::Identity());
    const Eigen::Vector2d mean_oracle = cov_oracle * lin;

    CHECK((cond.mean - mean_oracle).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((cond.cov - cov_oracle).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("g1 update limits") {
  SUBCASE("transition precision removed -> GP-only conditional") {
    Tiny tc = make_tiny(3, 4, 9, /*sigma2_eta=*/1e12);
    const ScalarMoments cond = tc.sampler->g1_conditional();
    const ChainState& s = tc.sampler->state();
    const ScalarMoments gp_only = gstar_conditional(1.0, s.path.x0, s.dz, *tc.grid, s.params);
    CHECK(std::abs(cond.mean - gp_only.mean) < 1e-8);
    CHECK(std::abs(cond.var - gp_only.var) < 1e-8);
  }
  SUBCASE("vanishing transition variance pins g1 at x*_1") {
    Tiny tc = make_tiny(3, 4, 10, /*sigma2_eta=*/1e-10);
    Sampler& smp = *tc.sampler;
    for (int i = 0; i < 10; ++i) {
      smp.update_g1();
      CHECK(std::abs(smp.state().path.g1 - smp.state().path.x_star(1)) < 1e-4);
    }
  }
}

TEST_CASE("D_z update oracles") {
  SUBCASE("T = 0 edge draws from dz_given_g1 exactly") {
    PriorSpec pr = tiny_priors();
    Eigen::VectorXd y(0);
    std::vector<double> times;
    Rng grid_rng(101);
    LookupGrid grid =
        build_grid(3, 1.0, 6.0, GridMode::time_scaled, GpScale(std::sqrt(kSigma2G)), grid_rng);
    McmcConfig cfg;
    cfg.seed = 12;
    Sampler smp(y, times, grid, pr, kSigma2G, kSigma2Eta, cfg);
    const ChainState& s = smp.state();
    const MomentPair cond = smp.dz_conditional();
    ModelParams p = s.params;
    const MomentPair direct = dz_given_g1(grid, s.path.x0, s.path.g1, p);
    CHECK((cond.mean - direct.mean).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK((cond.cov - direct.cov).lpNorm<Eigen::Infinity>() < 1e-8);
  }

  SUBCASE("n = 3, T = 2: complete-the-square against a stacked-Gaussian oracle") {
    Tiny tc = make_tiny(2, 3, 13);
    Sampler& smp = *tc.sampler;
    const ChainState& s = smp.state();
    const LookupGrid& grid = *tc.grid;
    const Eigen::Index n = grid.n();

    const MomentPair cond = smp.dz_conditional();

    // Joint Gaussian over (D_z, x*_2, x*_3): D_z ~ N(mu0, C0) from the
    // (x0, g1) conditioning, x*_t = c_t + a_t'D_z + e_t with Var e_t = var_t.
    const MomentPair dzg = dz_given_g1(grid, s.path.x0, s.path.g1, s.params);
    std::vector<Eigen::VectorXd> a(2);
    std::vector<double> c(2), noise(2);
    for (int t = 2; t <= 3; ++t) {
      const LinCircPoint q(static_cast<double>(t), s.path.x[t - 1].value);
      const Eigen::VectorXd sv = grid.cross_corr(q);
      a[t - 2] = grid.chol().solve(sv);
      const Eigen::Vector4d v = basis_h(q) - grid.basis().transpose() * a[t - 2];
      c[t - 2] = v.dot(s.params.beta_g);
      noise[t - 2] = s.params.sigma2_eta + kSigma2G * (1.0 - sv.dot(a[t - 2]));
    }
    Eigen::VectorXd mu(n + 2);
    Eigen::MatrixXd sig(n + 2, n + 2);
    mu.head(n) = dzg.mean;
    sig.topLeftCorner(n, n) = dzg.cov;
    for (int i = 0; i < 2; ++i) {
      mu(n + i) = c[static_cast<std::size_t>(i)] + a[static_cast<std::size_t>(i)].dot(dzg.mean);
      const Eigen::VectorXd cross = dzg.cov * a[static_cast<std::size_t>(i)];
      sig.block(0, n + i, n, 1) = cross;
      sig.block(n + i, 0, 1, n) = cross.transpose();
      for (int j = 0; j < 2; ++j)
        sig(n + i, n + j) =
            a[static_cast<std::size_t>(i)].dot(dzg.cov * a[static_cast<std::size_t>(j)]) +
            (i == j ? noise[static_cast<std::size_t>(i)] : 0.0);
    }
    std::vector<int> a_idx, b_idx;
    for (int i = 0; i < n; ++i) a_idx.push_back(i);
    b_idx = {static_cast<int>(n), static_cast<int>(n) + 1};
    Eigen::VectorXd obs(2);
    obs << s.path.x_star(2), s.path.x_star(3);
    const testsupport::Conditioned oracle =
        testsupport::condition_gaussian(mu, sig, a_idx, b_idx, obs);
    CHECK((cond.mean - oracle.mean).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK((cond.cov - oracle.cov).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("x_{T+1} update: range, pinning, truncated CDF") {
  Tiny tc = make_tiny(3, 3, 14);
  Sampler& smp = *tc.sampler;
  for (int i = 0; i < 200; ++i) {
    smp.update_x_T1();
    const double x = smp.state().path.x[4].value;
    CHECK(x >= 0.0);
    CHECK(x < kTwoPi);
  }

  // Tiny total variance (both the GP scale and the evolution noise) pins the
  // draw at the conditional mean.
  {
    PriorSpec pr = tiny_priors();
    Eigen::VectorXd y2(3);
    y2 << 0.2, -0.1, 0.4;
    std::vector<double> times2{1.0, 2.0, 3.0};
    Rng grid_rng(1500);
    LookupGrid grid2 =
        build_grid(3, 1.0, 7.0, GridMode::time_scaled, GpScale(1e-6), grid_rng);
    McmcConfig cfg2;
    cfg2.seed = 15;
    Sampler smp2(y2, times2, grid2, pr, 1e-12, 1e-14, cfg2);
    ChainState s = smp2.state();
    s.path.k[4] = 0;
    smp2.set_state(s);
    const ScalarMoments cond = smp2.x_T1_conditional();
    REQUIRE(cond.mean > 0.1);
    REQUIRE(cond.mean < kTwoPi - 0.1);
    for (int i = 0; i < 10; ++i) {
      smp2.update_x_T1();
      CHECK(std::abs(smp2.state().path.x[4].value - cond.mean) < 1e-4);
    }
  }

  // Empirical draws follow the band-truncated normal law.
  {
    const ScalarMoments cond = smp.x_T1_conditional();
    const double lo = kTwoPi * static_cast<double>(smp.state().path.k[4]);
    const double hi = lo + kTwoPi;
    const double sd = std::sqrt(cond.var);
    const double flo = normal_cdf((lo - cond.mean) / sd);
    const double fhi = normal_cdf((hi - cond.mean) / sd);
    const long n = 10000;
    std::vector<double> draws;
    draws.reserve(static_cast<std::size_t>(n));
    // The block is a Gibbs draw given the rest; everything else stays frozen,
    // so its empirical law must match the truncated normal.
    for (long i = 0; i < n; ++i) {
      smp.update_x_T1();
      draws.push_back(smp.state().path.x_star(4));
    }
    std::sort(draws.begin(), draws.end());
    double dmax = 0.0;
    for (long i = 0; i < n; ++i) {
      const double f = (normal_cdf((draws[static_cast<std::size_t>(i)] - cond.mean) / sd) - flo) /
                       (fhi - flo);
      dmax = std::max(dmax, std::abs(f - (i + 0.5) / static_cast<double>(n)));
    }
    CHECK(dmax < testsupport::ks_crit_999(static_cast<std::size_t>(n)));
  }
}

TEST_CASE("K_t frozen-state chain matches the normalized band numerators") {
  Tiny tc = make_tiny(2, 3, 16);
  Sampler& smp = *tc.sampler;
  const int t = 2;
  const ScalarMoments cond = smp.transition_cache(t);
  const double x = smp.state().path.x[t].value;

  // Target masses over |k| <= k_max: Gaussian point numerators at x + 2 pi k.
  std::map<WrapCounter, double> mass;
  double total = 0.0;
  for (WrapCounter k = -kDefaultKMax; k <= kDefaultKMax; ++k) {
    const double r = x + kTwoPi * static_cast<double>(k) - cond.mean;
    const double w = std::exp(-0.5 * r * r / cond.var);
    mass[k] = w;
    total += w;
  }
  for (auto& [k, w] : mass) w /= total;

  const long n_iter = 200000;
  const long thin = 2;
  std::map<WrapCounter, long> counts;
  long kept = 0;
  for (long i = 0; i < n_iter; ++i) {
    smp.update_K_t(t);
    if (i % thin == 0) {
      counts[smp.state().path.k[t]]++;
      ++kept;
    }
  }
  std::vector<long> obs;
  std::vector<double> probs;
  double pooled_p = 0.0;
  long pooled_c = 0;
  for (const auto& [k, w] : mass) {
    const long c = counts.count(k) ? counts[k] : 0;
    if (w * static_cast<double>(kept) >= 5.0) {
      obs.push_back(c);
      probs.push_back(w);
    } else {
      pooled_p += w;
      pooled_c += c;
    }
  }
  if (pooled_p > 0.0) {
    obs.push_back(pooled_c);
    probs.push_back(pooled_p);
  }
  const double stat = testsupport::chi2_statistic(obs, probs, kept);
  // Thinned MCMC draws still carry some autocorrelation; allow 2x the
  // critical value rather than the iid threshold.
  CHECK(stat < 2.0 * testsupport::chi2_crit_999(static_cast<int>(obs.size()) - 1));

  // Single-band pinning under tiny variance.
  Tiny tc2 = make_tiny(2, 3, 17, /*sigma2_eta=*/1e-12);
  ChainState s = tc2.sampler->state();
  s.path.k[t] = 3;
  tc2.sampler->set_state(s);
  const ScalarMoments c2 = tc2.sampler->transition_cache(t);
  if (c2.mean > 0.0 && c2.mean < kTwoPi) {
    for (int i = 0; i < 5000; ++i) tc2.sampler->update_K_t(t);
    CHECK(tc2.sampler->state().path.k[t] == 0);
  }
}

TEST_CASE("x0 chain mixes to uniform under a flat target") {
  // Remote grid times make the cross correlation negligible, and a zero
  // beta_g removes the angular dependence of the g1 conditional mean.
  PriorSpec pr;
  pr.x0 = {M_PI, 0.0};  // flat prior
  pr.beta_g_mean = Eigen::Vector4d::Zero();
  pr.beta_g_cov = Eigen::Vector4d{1.0, 1.0, 0.0, 0.0}.asDiagonal().toDenseMatrix();
  Eigen::VectorXd y(2);
  y << 0.1, -0.2;
  std::vector<double> times{1.0, 2.0};
  Rng grid_rng(201);
  LookupGrid grid = build_grid(3, 1000.0, 2000.0, GridMode::time_scaled,
                               GpScale(std::sqrt(kSigma2G)), grid_rng);
  McmcConfig cfg;
  cfg.seed = 18;
  Sampler smp(y, times, grid, pr, kSigma2G, kSigma2Eta, cfg);
  ChainState s = smp.state();
  s.params.beta_g = Eigen::Vector4d::Zero();
  smp.set_state(s);

  const long n_iter = 200000, thin = 20;
  std::vector<long> counts(10, 0);
  long kept = 0;
  for (long i = 0; i < n_iter; ++i) {
    smp.update_x0();
    if (i % thin == 0) {
      counts[static_cast<std::size_t>(smp.state().path.x0.value / kTwoPi * 10)]++;
      ++kept;
    }
  }
  const std::vector<double> probs(10, 0.1);
  const double stat = testsupport::chi2_statistic(counts, probs, kept);
  CHECK(stat < 2.0 * testsupport::chi2_crit_999(9));
}

TEST_CASE("x_t zero move is accepted") {
  // A proposal equal to the current point has acceptance ratio 1; exercised
  // through the kappa -> infinity component, which moves by ~1e-3 at most.
  Tiny tc = make_tiny(3, 3, 19);
  McmcConfig cfg;
  cfg.seed = 19;
  cfg.xt_kappas = {1e9};
  cfg.xt_weights = {1.0};
  Sampler smp(tc.y, tc.times, *tc.grid, tc.priors, kSigma2G, kSigma2Eta, cfg);
  const double before = smp.state().path.x[1].value;
  smp.update_x_t(1);
  CHECK(std::abs(smp.state().path.x[1].value - before) < 1e-3);
  CHECK(smp.acceptance().at("x_t").accepted >= 0);
}

TEST_CASE("run_chain bookkeeping") {
  SUBCASE("n_iter = burn_in + 1 stores exactly one sample") {
    Tiny tc = make_tiny(3, 3, 20);
    McmcConfig cfg;
    cfg.seed = 20;
    cfg.n_iter = 6;
    cfg.burn_in = 5;
    cfg.thin = 1;
    const SampleSet s = run_chain(tc.y, tc.times, *tc.grid, tc.priors, kSigma2G, kSigma2Eta, cfg);
    CHECK(s.rows.size() == 1);
    CHECK(s.columns.size() == s.rows[0].size());
  }

  SUBCASE("fixed seed reproduces the sample set bit-exactly") {
    Tiny tc = make_tiny(4, 3, 21);
    McmcConfig cfg;
    cfg.seed = 21;
    cfg.n_iter = 60;
    cfg.burn_in = 20;
    cfg.thin = 2;
    const SampleSet a = run_chain(tc.y, tc.times, *tc.grid, tc.priors, kSigma2G, kSigma2Eta, cfg);
    const SampleSet b = run_chain(tc.y, tc.times, *tc.grid, tc.priors, kSigma2G, kSigma2Eta, cfg);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i)
      for (std::size_t j = 0; j < a.rows[i].size(); ++j) CHECK(a.rows[i][j] == b.rows[i][j]);
  }

  SUBCASE("incremental caches stay within audit tolerance") {
    Tiny tc = make_tiny(6, 4, 22);
    McmcConfig cfg;
    cfg.seed = 22;
    cfg.n_iter = 400;
    cfg.burn_in = 100;
    cfg.self_audit_every = 50;
    const SampleSet s = run_chain(tc.y, tc.times, *tc.grid, tc.priors, kSigma2G, kSigma2Eta, cfg);
    CHECK(s.max_audit_drift <= 1e-8);
    for (const auto& row : s.rows) CHECK(std::isfinite(row[1]));  // logp column
    // The wrap identity is preserved by every update.
    CHECK(s.acceptance.at("x_t").proposed == 400 * 6);
  }
}
