// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/simulate.hpp"

#include <cmath>
#include <stdexcept>

#include "circssm/forecast.hpp"
#include "circssm/util.hpp"

namespace circssm {

NonlinearSim simulate_nonlinear(const NonlinearSimConfig& cfg) {
  if (cfg.T < 1) throw std::invalid_argument("simulate_nonlinear: T must be >= 1");
  if (!(cfg.sigma_u > 0.0) || !(cfg.sigma_v > 0.0))
    throw std::invalid_argument("simulate_nonlinear: noise scales must be positive");
  Rng rng(cfg.seed);
  NonlinearSim out;
  out.y.resize(cfg.T);
  out.theta.resize(static_cast<std::size_t>(cfg.T) + 1);
  out.theta[0] = Angle::wrap(cfg.theta0);

  double w = std::tan(0.5 * (out.theta[0].value - M_PI));
  if (!std::isfinite(w) || std::abs(w) > 1e12)
    throw std::runtime_error("simulate_nonlinear: theta0 within 1e-12 of the tangent singularity");
  for (int t = 1; t <= cfg.T; ++t) {
    const double u = rng.normal(0.0, cfg.sigma_u);
    w = cfg.alpha * w + cfg.beta * w / (1.0 + w * w) + cfg.gamma * std::cos(1.2 * (t - 1)) + u;
    if (!std::isfinite(w))
      throw std::runtime_error("simulate_nonlinear: tangent overflow at step " + std::to_string(t));
    out.theta[static_cast<std::size_t>(t)] = Angle::wrap(M_PI + 2.0 * std::atan(w));
    const double tn = std::tan(out.theta[static_cast<std::size_t>(t)].value);
    const double v = rng.normal(0.0, cfg.sigma_v);
    out.y(t - 1) = tn * tn / 20.0 + v;
    if (!std::isfinite(out.y(t - 1)))
      throw std::runtime_error("simulate_nonlinear: observation overflow at step " +
                               std::to_string(t));
  }
  return out;
}

int ReplicateReport::n_ok() const {
  int n = 0;
  for (const auto& r : rows)
    if (r.ok) ++n;
  return n;
}

int ReplicateReport::n_covered() const {
  int n = 0;
  for (const auto& r : rows)
    if (r.ok && r.covered) ++n;
  return n;
}

double ReplicateReport::mean_latent_frac() const {
  double acc = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.ok) {
      acc += r.latent_top_mass_frac;
      ++n;
    }
  return n > 0 ? acc / n : 0.0;
}

ReplicateReport replicate_harness(
    const std::function<HarnessData(std::uint64_t)>& generator,
    const std::function<FitOutput(const HarnessData&, std::uint64_t)>& fit_pipeline, int n_reps,
    double hpd_level, int n_bins, std::uint64_t seed) {
  if (n_reps < 1) throw std::invalid_argument("replicate_harness: n_reps must be >= 1");
  ReplicateReport report;
  for (int rep = 0; rep < n_reps; ++rep) {
    ReplicateRow row;
    row.rep = rep;
    const std::uint64_t rep_seed = splitmix64(seed ^ static_cast<std::uint64_t>(rep + 1));
    try {
      const HarnessData data = generator(rep_seed);
      const FitOutput fit = fit_pipeline(data, rep_seed);
      const HpdInterval hpd = hpd_interval(fit.predictive, hpd_level);
      row.hpd_lo = hpd.lo;
      row.hpd_hi = hpd.hi;
      row.width = hpd.width();
      row.covered = hpd.contains(data.y_holdout);
      if (!fit.latent_draws.empty() && !data.theta_true.empty()) {
        const DensityGrid grid = latent_density_grid(fit.latent_draws, n_bins);
        int hits = 0;
        for (int t = 0; t < grid.T; ++t) {
          const std::vector<bool> top = grid.top_mass_bins(t, 0.5);
          if (top[static_cast<std::size_t>(grid.bin_of(data.theta_true[static_cast<std::size_t>(t)]))])
            ++hits;
        }
        row.latent_top_mass_frac = static_cast<double>(hits) / grid.T;
      }
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  if (report.n_ok() == 0)
    throw std::runtime_error("replicate_harness: every replicate failed; first error: " +
                             report.rows.front().error);
  return report;
}

}  // namespace circssm
