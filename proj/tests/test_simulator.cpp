// Apache License, Version 2.0, refer to LICENSE.txt
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "circssm/simulate.hpp"
#include "circssm/util.hpp"

using namespace circssm;

namespace {

NonlinearSimConfig noise_free(int T) {
  NonlinearSimConfig cfg;
  cfg.T = T;
  cfg.sigma_u = 1e-300;
  cfg.sigma_v = 1e-300;
  return cfg;
}

}  // namespace

TEST_CASE("nonlinear benchmark: noise-free recursion values") {
  const NonlinearSim sim = simulate_nonlinear(noise_free(3));
  // w1 = gamma*cos(0) = 0.2, theta1 = pi + 2 atan(0.2), y1 = tan^2(theta1)/20.
  CHECK(sim.theta[1].value == doctest::Approx(3.5363837732895548).epsilon(1e-12));
  CHECK(sim.y(0) == doctest::Approx(0.008680555555555556).epsilon(1e-10));
}

TEST_CASE("nonlinear benchmark: fixed point at gamma = 0") {
  NonlinearSimConfig cfg = noise_free(10);
  cfg.gamma = 0.0;
  const NonlinearSim sim = simulate_nonlinear(cfg);
  for (int t = 0; t <= 10; ++t)
    CHECK(sim.theta[static_cast<std::size_t>(t)].value == doctest::Approx(M_PI).epsilon(1e-12));
  for (int t = 0; t < 10; ++t) CHECK(std::abs(sim.y(t)) < 1e-30);
}

TEST_CASE("nonlinear benchmark: reference configuration") {
  NonlinearSimConfig cfg;  // alpha 0.05, beta 0.1, gamma 0.2, sigmas 0.1, T 101
  cfg.seed = 42;
  const NonlinearSim sim = simulate_nonlinear(cfg);
  CHECK(sim.y.size() == 101);
  CHECK(sim.theta.size() == 102);
  for (const Angle& a : sim.theta) {
    CHECK(a.value >= 0.0);
    CHECK(a.value < kTwoPi);
  }
  CHECK(sim.y.allFinite());
}

TEST_CASE("nonlinear benchmark: tangent half-angle identity along the path") {
  // Re-run the recursion with the same draws and check
  // tan((theta_t - pi)/2) = w_t at every step.
  NonlinearSimConfig cfg;
  cfg.T = 50;
  cfg.seed = 7;
  const NonlinearSim sim = simulate_nonlinear(cfg);
  Rng rng(cfg.seed);
  double w = std::tan(0.5 * (cfg.theta0 - M_PI));
  for (int t = 1; t <= cfg.T; ++t) {
    const double u = rng.normal(0.0, cfg.sigma_u);
    w = cfg.alpha * w + cfg.beta * w / (1.0 + w * w) + cfg.gamma * std::cos(1.2 * (t - 1)) + u;
    rng.normal(0.0, cfg.sigma_v);  // observation draw consumed in step order
    CHECK(std::tan(0.5 * (sim.theta[static_cast<std::size_t>(t)].value - M_PI)) ==
          doctest::Approx(w).epsilon(1e-10));
  }
}

TEST_CASE("nonlinear benchmark: noise-free paths ignore the seed") {
  NonlinearSimConfig a = noise_free(20);
  NonlinearSimConfig b = noise_free(20);
  a.seed = 1;
  b.seed = 999;
  const NonlinearSim sa = simulate_nonlinear(a);
  const NonlinearSim sb = simulate_nonlinear(b);
  for (int t = 0; t <= 20; ++t)
    CHECK(sa.theta[static_cast<std::size_t>(t)].value ==
          doctest::Approx(sb.theta[static_cast<std::size_t>(t)].value).epsilon(1e-12));
}

TEST_CASE("nonlinear benchmark: singular start rejected") {
  NonlinearSimConfig cfg = noise_free(5);
  cfg.theta0 = 1e-13;  // tan((theta-pi)/2) blows up near theta = 0
  CHECK_THROWS(simulate_nonlinear(cfg));
}

TEST_CASE("replicate harness") {
  auto generator = [](std::uint64_t seed) {
    HarnessData d;
    Rng rng(seed);
    d.y.resize(10);
    for (int i = 0; i < 10; ++i) {
      d.y(i) = rng.normal(0.0, 1.0);
      d.times.push_back(static_cast<double>(i + 1));
      d.theta_true.push_back(rng.uniform(0.0, kTwoPi));
    }
    d.y_holdout = 0.42;
    return d;
  };

  SUBCASE("single replicate, perfect-oracle stub") {
    auto stub = [](const HarnessData& d, std::uint64_t) {
      FitOutput out;
      out.predictive.assign(500, d.y_holdout);  // point mass at the truth
      out.latent_draws.push_back(d.theta_true);
      return out;
    };
    const ReplicateReport rep = replicate_harness(generator, stub, 1, 0.95, 100, 3);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].ok);
    CHECK(rep.n_covered() == 1);
    CHECK(rep.rows[0].width == 0.0);
    CHECK(rep.rows[0].latent_top_mass_frac == 1.0);
  }

  SUBCASE("failures are recorded, not fatal") {
    int calls = 0;
    auto flaky = [&calls](const HarnessData& d, std::uint64_t) {
      if (++calls == 1) throw std::runtime_error("boom");
      FitOutput out;
      out.predictive.assign(500, d.y_holdout);
      return out;
    };
    const ReplicateReport rep = replicate_harness(generator, flaky, 2, 0.95, 100, 4);
    CHECK(rep.rows[0].ok == false);
    CHECK(rep.rows[0].error == "boom");
    CHECK(rep.rows[1].ok == true);
    CHECK(rep.n_ok() == 1);
  }

  SUBCASE("total failure raises") {
    auto broken = [](const HarnessData&, std::uint64_t) -> FitOutput {
      throw std::runtime_error("always");
    };
    CHECK_THROWS(replicate_harness(generator, broken, 3, 0.95, 100, 5));
  }
}
