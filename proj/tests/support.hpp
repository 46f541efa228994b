// Apache License, Version 2.0, refer to LICENSE.txt
// Shared test oracles. Everything here is independent of the library's own
// conditioning/factorization paths: plain Eigen solves, long-double series.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace testsupport {

struct Conditioned {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Partitioned-Gaussian oracle: condition the joint N(mu, sigma) on the
// coordinates in b_idx taking values bv; a_idx are the remaining coordinates.
inline Conditioned condition_gaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                      const std::vector<int>& a_idx, const std::vector<int>& b_idx,
                                      const Eigen::VectorXd& bv) {
  const auto na = static_cast<Eigen::Index>(a_idx.size());
  const auto nb = static_cast<Eigen::Index>(b_idx.size());
  Eigen::VectorXd mua(na), mub(nb);
  Eigen::MatrixXd saa(na, na), sab(na, nb), sbb(nb, nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    mua(i) = mu(a_idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < na; ++j)
      saa(i, j) = sigma(a_idx[static_cast<std::size_t>(i)], a_idx[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < nb; ++j)
      sab(i, j) = sigma(a_idx[static_cast<std::size_t>(i)], b_idx[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    mub(i) = mu(b_idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < nb; ++j)
      sbb(i, j) = sigma(b_idx[static_cast<std::size_t>(i)], b_idx[static_cast<std::size_t>(j)]);
  }
  const Eigen::MatrixXd gain = sab * sbb.ldlt().solve(Eigen::MatrixXd::Identity(nb, nb));
  Conditioned out;
  out.mean = mua + gain * (bv - mub);
  out.cov = saa - gain * sab.transpose();
  return out;
}

// Upper 0.001 chi-square quantiles, df 1..40 (frozen from an external table),
// Wilson-Hilferty beyond.
inline double chi2_crit_999(int df) {
  static const double table[40] = {
      10.827566, 13.815511, 16.266236, 18.466827, 20.515006, 22.457744, 24.321886, 26.124482,
      27.877165, 29.588298, 31.264134, 32.909490, 34.528179, 36.123274, 37.697298, 39.252355,
      40.790217, 42.312396, 43.820196, 45.314747, 46.797038, 48.267942, 49.728232, 51.178598,
      52.619656, 54.051962, 55.476020, 56.892285, 58.301173, 59.703064, 61.098306, 62.487219,
      63.870099, 65.247217, 66.618829, 67.985168, 69.346452, 70.702887, 72.054663, 73.401958};
  if (df >= 1 && df <= 40) return table[df - 1];
  const double z = 3.090232306167813;  // Phi^-1(0.999)
  const double a = 2.0 / (9.0 * df);
  const double c = 1.0 - a + z * std::sqrt(a);
  return df * c * c * c;
}

// Asymptotic Kolmogorov-Smirnov critical value at p = 0.001.
inline double ks_crit_999(std::size_t n) { return 1.9494746035 / std::sqrt(static_cast<double>(n)); }

// Independent modified Bessel I_0 via its power series in long double.
inline double bessel_i0_series(double x) {
  const long double q = 0.25L * static_cast<long double>(x) * static_cast<long double>(x);
  long double term = 1.0L, sum = 1.0L;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<long double>(k) * k);
    sum += term;
    if (term < sum * 1e-22L) break;
  }
  return static_cast<double>(sum);
}

// Chi-square GOF statistic against given cell probabilities.
inline double chi2_statistic(const std::vector<long>& counts, const std::vector<double>& probs,
                             long n) {
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = probs[i] * static_cast<double>(n);
    const double d = static_cast<double>(counts[i]) - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace testsupport
