// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "circssm/util.hpp"

namespace circssm {

PredictiveMoments predictive_moments(const Eigen::VectorXd& y, const std::vector<Angle>& x,
                                     const std::vector<double>& times, Angle x_next, double t_next,
                                     const Eigen::Vector4d& beta_f, double sigma2_eps,
                                     double sigma2_f) {
  const Eigen::Index T = y.size();
  if (T == 0 || x.size() != static_cast<std::size_t>(T) || times.size() != x.size())
    throw std::invalid_argument("predictive_moments: inconsistent inputs");
  const GpScale sf(std::sqrt(sigma2_f));
  std::vector<LinCircPoint> pts;
  pts.reserve(x.size());
  for (Eigen::Index i = 0; i < T; ++i)
    pts.emplace_back(times[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)].value);
  const LinCircPoint q(t_next, x_next.value);

  Eigen::VectorXd s(T), resid(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    s(i) = corr(q, pts[static_cast<std::size_t>(i)], sf);
    resid(i) = y(i) - basis_h(pts[static_cast<std::size_t>(i)]).dot(beta_f);
  }
  const Eigen::MatrixXd af = corr_matrix(pts, sf);
  CholFactor chol(af, "predictive A_f");
  const Eigen::VectorXd a = chol.solve(s);

  PredictiveMoments out;
  out.mean = basis_h(q).dot(beta_f) + a.dot(resid);
  double one_minus = 1.0 - s.dot(a);
  if (one_minus < -1e-8)
    throw std::runtime_error("predictive_moments: conditional variance below tolerance");
  if (one_minus < 0.0) one_minus = 0.0;
  out.var = sigma2_eps + sigma2_f * one_minus;
  return out;
}

double predictive_draw(const PredictiveMoments& m, Rng& rng) {
  return rng.normal(m.mean, std::sqrt(m.var));
}

HpdInterval hpd_interval(std::vector<double> samples, double level) {
  if (samples.size() < 100) throw std::invalid_argument("hpd_interval: need at least 100 samples");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("hpd_interval: level must be in (0,1)");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  std::size_t m = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
  m = std::clamp<std::size_t>(m, 1, n);
  HpdInterval best{samples.front(), samples[m - 1]};
  for (std::size_t i = 1; i + m <= n; ++i) {
    if (samples[i + m - 1] - samples[i] < best.width()) best = {samples[i], samples[i + m - 1]};
  }
  return best;
}

double DensityGrid::bin_center(int b) const {
  return (static_cast<double>(b) + 0.5) * kTwoPi / n_bins;
}

int DensityGrid::bin_of(double angle) const {
  const double a = mod_2pi(angle);
  int b = static_cast<int>(std::floor(a / kTwoPi * n_bins));
  return std::clamp(b, 0, n_bins - 1);
}

std::vector<bool> DensityGrid::top_mass_bins(int t, double level) const {
  std::vector<int> order(static_cast<std::size_t>(n_bins));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return mass(a, t) > mass(b, t); });
  std::vector<bool> member(static_cast<std::size_t>(n_bins), false);
  double acc = 0.0;
  for (int b : order) {
    member[static_cast<std::size_t>(b)] = true;
    acc += mass(b, t);
    if (acc >= level) break;
  }
  return member;
}

namespace {

double arc_distance(double a, double b) {
  const double d = std::abs(mod_2pi(a) - mod_2pi(b));
  return std::min(d, kTwoPi - d);
}

}  // namespace

DensityGrid latent_density_grid(const std::vector<std::vector<double>>& draws, int n_bins) {
  if (draws.empty()) throw std::invalid_argument("latent_density_grid: empty sample set");
  if (n_bins < 2) throw std::invalid_argument("latent_density_grid: need at least 2 bins");
  const int T = static_cast<int>(draws.front().size());
  if (T == 0) throw std::invalid_argument("latent_density_grid: empty draws");
  for (const auto& d : draws)
    if (static_cast<int>(d.size()) != T)
      throw std::invalid_argument("latent_density_grid: ragged draws");

  DensityGrid g;
  g.n_bins = n_bins;
  g.T = T;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n_bins, T);
  for (const auto& d : draws)
    for (int t = 0; t < T; ++t) counts(g.bin_of(d[static_cast<std::size_t>(t)]), t) += 1.0;
  g.mass = counts / static_cast<double>(draws.size());

  g.circular_median.assign(static_cast<std::size_t>(T), 0.0);
  for (int t = 0; t < T; ++t) {
    double best = std::numeric_limits<double>::infinity();
    double best_angle = 0.0;
    for (int b = 0; b < n_bins; ++b) {
      const double c = g.bin_center(b);
      double mean_dist = 0.0;
      for (const auto& d : draws) mean_dist += arc_distance(c, d[static_cast<std::size_t>(t)]);
      mean_dist /= static_cast<double>(draws.size());
      if (mean_dist < best) {
        best = mean_dist;
        best_angle = c;
      }
    }
    g.circular_median[static_cast<std::size_t>(t)] = best_angle;
  }
  return g;
}

}  // namespace circssm
