// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <vector>

#include "circssm/rng.hpp"

namespace circssm {

/// Angle on [0, 2pi). Construction wraps; the invariant holds everywhere.
struct Angle {
  double value = 0.0;

  Angle() = default;
  static Angle wrap(double raw);
};

/// Signed wrap counter K_t linking a linear value to its circular image via
/// x* = x + 2*pi*K. Support is unbounded in principle; runs restrict to
/// |k| <= k_max (config, default 10) and warn when tail mass is not negligible.
using WrapCounter = long;

inline constexpr int kDefaultKMax = 10;

struct VonMisesParams {
  double mu = 0.0;     // location, radians
  double kappa = 0.0;  // concentration >= 0; 0 is uniform on the circle
};

/// x - 2*pi*floor(x / 2*pi), in [0, 2pi). Errors on non-finite input.
double mod_2pi(double x);

/// log I_0(x), stable for all x >= 0 (series below 50, asymptotic above).
double log_bessel_i0(double x);

double von_mises_density(Angle theta, const VonMisesParams& p);
double von_mises_log_density(Angle theta, const VonMisesParams& p);

/// Best-Fisher rejection sampler; kappa = 0 falls back to uniform.
Angle von_mises_sample(const VonMisesParams& p, Rng& rng);

/// Symmetric proposal for angles: pick a component by weight, then draw a
/// von Mises step centred at `center`. q(a->b) = q(b->a) by construction.
Angle von_mises_mixture_sample(Angle center, const std::vector<double>& kappas,
                               const std::vector<double>& weights, Rng& rng);

double von_mises_mixture_density(Angle x, Angle center, const std::vector<double>& kappas,
                                 const std::vector<double>& weights);

/// Standard normal CDF via erfc; relative error below 1e-12 in both tails.
double normal_cdf(double z);
/// Upper-tail companion, Phi_c(z) = 1 - Phi(z), accurate for large z.
double normal_cdf_upper(double z);
/// Inverse standard normal CDF (Wichura AS241).
double inv_normal_cdf(double p);

/// P(K = k) for x* ~ N(mu, sigma^2):
///   Phi((2*pi*(k+1) - mu)/sigma) - Phi((2*pi*k - mu)/sigma).
/// Evaluated through the complementary CDF on the positive side so the
/// difference keeps relative accuracy in the tails.
double wrap_weight(WrapCounter k, double mu, double sigma);

/// Exact draw from N(mu, sigma^2) restricted to [lo, hi], inverse-CDF with
/// tail-stable bound handling.
double truncated_normal_sample(double mu, double sigma, double lo, double hi, Rng& rng);

/// k + round(z), z ~ N(0, var). Symmetric over the integers.
WrapCounter discrete_rw_propose(WrapCounter k, double var, Rng& rng);

}  // namespace circssm
