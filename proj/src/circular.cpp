// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/circular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "circssm/util.hpp"

namespace circssm {

Angle Angle::wrap(double raw) {
  Angle a;
  a.value = mod_2pi(raw);
  return a;
}

double mod_2pi(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("mod_2pi: non-finite input");
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;  // ties at 2*pi map to 0
  return r;
}

double log_bessel_i0(double x) {
  if (x < 0.0) throw std::invalid_argument("log_bessel_i0: negative argument");
  if (x <= 50.0) {
    // I_0(x) = sum_k (x^2/4)^k / (k!)^2; the sum stays within double range here.
    const double q = 0.25 * x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 200; ++k) {
      term *= q / (static_cast<double>(k) * k);
      sum += term;
      if (term < sum * 1e-18) break;
    }
    return std::log(sum);
  }
  // I_0(x) ~ e^x / sqrt(2*pi*x) * sum_k mu_k / x^k, mu_k = prod (2j-1)^2 / (k! 8^k).
  double u = 1.0, sum = 1.0;
  for (int k = 1; k <= 12; ++k) {
    const double odd = 2.0 * k - 1.0;
    u *= odd * odd / (8.0 * k * x);
    sum += u;
    if (u < 1e-18) break;
  }
  return x - 0.5 * std::log(kTwoPi * x) + std::log(sum);
}

double von_mises_log_density(Angle theta, const VonMisesParams& p) {
  if (p.kappa < 0.0) throw std::invalid_argument("von_mises: kappa must be nonnegative");
  return p.kappa * std::cos(theta.value - p.mu) - std::log(kTwoPi) - log_bessel_i0(p.kappa);
}

double von_mises_density(Angle theta, const VonMisesParams& p) {
  return std::exp(von_mises_log_density(theta, p));
}

Angle von_mises_sample(const VonMisesParams& p, Rng& rng) {
  if (p.kappa < 0.0) throw std::invalid_argument("von_mises_sample: kappa must be nonnegative");
  if (p.kappa == 0.0) return Angle::wrap(kTwoPi * rng.uniform());
  // Best & Fisher (1979) wrapped-Cauchy envelope rejection.
  const double kappa = p.kappa;
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  double f;
  for (;;) {
    const double z = std::cos(M_PI * rng.uniform());
    f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u2 = rng.uniform();
    if (c * (2.0 - c) - u2 > 0.0) break;
    if (u2 > 0.0 && std::log(c / u2) + 1.0 - c >= 0.0) break;
  }
  const double sign = rng.uniform() > 0.5 ? 1.0 : -1.0;
  return Angle::wrap(p.mu + sign * std::acos(std::clamp(f, -1.0, 1.0)));
}

Angle von_mises_mixture_sample(Angle center, const std::vector<double>& kappas,
                               const std::vector<double>& weights, Rng& rng) {
  if (kappas.empty() || kappas.size() != weights.size())
    throw std::invalid_argument("von_mises_mixture_sample: empty or mismatched mixture");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-8)
    throw std::invalid_argument("von_mises_mixture_sample: weights must sum to 1");
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t pick = kappas.size() - 1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  return von_mises_sample({center.value, kappas[pick]}, rng);
}

double von_mises_mixture_density(Angle x, Angle center, const std::vector<double>& kappas,
                                 const std::vector<double>& weights) {
  if (kappas.empty() || kappas.size() != weights.size())
    throw std::invalid_argument("von_mises_mixture_density: empty or mismatched mixture");
  double d = 0.0;
  for (std::size_t i = 0; i < kappas.size(); ++i)
    d += weights[i] * von_mises_density(x, {center.value, kappas[i]});
  return d;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double normal_cdf_upper(double z) { return 0.5 * std::erfc(z * M_SQRT1_2); }

double inv_normal_cdf(double p) {
  // Wichura (1988), algorithm AS241 PPND16.
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("inv_normal_cdf: p must be in (0,1)");
  const double q = p - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double wrap_weight(WrapCounter k, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("wrap_weight: sigma must be positive");
  const double a = (kTwoPi * static_cast<double>(k) - mu) / sigma;
  const double b = (kTwoPi * static_cast<double>(k + 1) - mu) / sigma;
  const double w = (a + b > 0.0) ? normal_cdf_upper(a) - normal_cdf_upper(b)
                                 : normal_cdf(b) - normal_cdf(a);
  return std::max(w, 0.0);
}

double truncated_normal_sample(double mu, double sigma, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw std::invalid_argument("truncated_normal_sample: requires lo < hi");
  if (!(sigma > 0.0)) throw std::invalid_argument("truncated_normal_sample: sigma must be positive");
  double a = (lo - mu) / sigma;
  double b = (hi - mu) / sigma;
  // Work on the side where the CDF is small: flip so the interval midpoint
  // is <= 0, sample there, and undo the flip.
  const bool flipped = (a + b) > 0.0;
  if (flipped) {
    const double na = -b, nb = -a;
    a = na;
    b = nb;
  }
  const double fa = normal_cdf(a);
  const double fb = normal_cdf(b);
  double z;
  if (!(fb > fa)) {
    // Interval mass underflows; essentially all of it sits at the bound
    // nearest the mean.
    z = b;
  } else {
    const double u = fa + (fb - fa) * rng.uniform();
    z = inv_normal_cdf(std::clamp(u, 1e-300, 1.0 - 1e-16));
  }
  if (flipped) z = -z;
  return std::clamp(mu + sigma * z, lo, hi);
}

WrapCounter discrete_rw_propose(WrapCounter k, double var, Rng& rng) {
  if (!(var > 0.0)) throw std::invalid_argument("discrete_rw_propose: var must be positive");
  return k + std::lround(rng.normal(0.0, std::sqrt(var)));
}

}  // namespace circssm
