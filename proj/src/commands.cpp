// Apache License, Version 2.0, refer to LICENSE.txt
// Command implementations behind the CLI: simulate, mle, fit, forecast,
// diagnose, validate-gp.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "circssm/io.hpp"
#include "circssm/util.hpp"

namespace circssm {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out_dir);
  return std::filesystem::path(cfg.out_dir) / name;
}

struct PreparedData {
  Dataset train;
  std::optional<double> y_holdout;
  std::optional<double> t_holdout;
  std::optional<TrendCoeffs> trend;
};

PreparedData prepare_data(const RunConfig& cfg) {
  if (cfg.data_path.empty()) throw std::runtime_error("config: data.path is required");
  Dataset ds = read_dataset(cfg.data_path, cfg.data_degrees);
  if (ds.T() < 2) throw std::runtime_error("dataset too short");
  PreparedData out;
  if (cfg.data_detrend) {
    auto [resid, coeffs] = detrend_linear(ds);
    ds = std::move(resid);
    out.trend = coeffs;
  }
  if (cfg.data_holdout_last) {
    const int T = ds.T();
    out.y_holdout = ds.y(T - 1);
    out.t_holdout = ds.times[static_cast<std::size_t>(T - 1)];
    Dataset train;
    train.times.assign(ds.times.begin(), ds.times.end() - 1);
    train.y = ds.y.head(T - 1);
    if (ds.has_theta())
      train.theta_true.assign(ds.theta_true.begin(), ds.theta_true.end() - 1);
    ds = std::move(train);
  }
  if (ds.T() < 2) throw std::runtime_error("dataset too short after holdout split");
  out.train = std::move(ds);
  return out;
}

LookupGrid make_grid(const RunConfig& cfg, const PreparedData& data, double sigma_g) {
  Rng grid_rng = Rng::substream(cfg.seed, 3);
  const double lo = data.train.times.front();
  const double hi = data.train.times.back();
  return build_grid(cfg.grid_n, lo, hi, cfg.grid_mode, GpScale(sigma_g), grid_rng);
}

int cmd_simulate(const RunConfig& cfg) {
  Dataset ds;
  if (cfg.sim_kind == "nonlinear") {
    NonlinearSimConfig sc = cfg.sim;
    sc.seed = cfg.seed;
    const NonlinearSim sim = simulate_nonlinear(sc);
    ds.y = sim.y;
    for (int t = 1; t <= sc.T; ++t) {
      ds.times.push_back(static_cast<double>(t));
      ds.theta_true.push_back(sim.theta[static_cast<std::size_t>(t)].value);
    }
  } else {
    const int T = cfg.sim_model_T;
    ModelParams p;
    p.beta_f = cfg.priors.beta_f_mean;
    p.beta_g = cfg.priors.beta_g_mean;
    p.sigma2_eps = cfg.priors.sigma2_eps.mode();
    p.sigma2_f = cfg.priors.sigma2_f.mode();
    p.sigma2_g = cfg.sigma_g * cfg.sigma_g;
    p.sigma2_eta = cfg.sigma_eta * cfg.sigma_eta;
    Rng grid_rng = Rng::substream(cfg.seed, 3);
    const LookupGrid grid =
        build_grid(cfg.grid_n, 1.0, static_cast<double>(T), cfg.grid_mode, p.scale_g(), grid_rng);
    Rng rng = Rng::substream(cfg.seed, 5);
    const GeneratedPath gen = generate_path(T, grid, p, cfg.priors, rng);
    ds.y = gen.y;
    for (int t = 1; t <= T; ++t) {
      ds.times.push_back(static_cast<double>(t));
      ds.theta_true.push_back(gen.path.x[t].value);
    }
  }
  write_dataset(out_path(cfg, "dataset.csv").string(), ds, output_meta(cfg));
  std::cout << "simulate: wrote " << ds.T() << " rows to "
            << out_path(cfg, "dataset.csv").string() << "\n";
  return 0;
}

int cmd_mle(const RunConfig& cfg) {
  const PreparedData data = prepare_data(cfg);
  const LookupGrid grid = make_grid(cfg, data, cfg.annealing.init_sigma_g);
  AnnealConfig ac = cfg.annealing;
  ac.seed = splitmix64(cfg.seed ^ 0x11);
  const AnnealResult res = anneal(data.train.y, data.train.times, grid, cfg.priors, ac);

  std::ofstream est(out_path(cfg, "mle.txt"));
  for (const auto& m : output_meta(cfg)) est << "# " << m << "\n";
  est << "sigma_g_hat=" << fmt(res.sigma_g_hat) << "\n";
  est << "sigma_eta_hat=" << fmt(res.sigma_eta_hat) << "\n";
  est << "best_loglik=" << fmt(res.best_loglik) << "\n";

  std::ofstream trace(out_path(cfg, "anneal_trace.csv"));
  for (const auto& m : output_meta(cfg)) trace << "# " << m << "\n";
  trace << "iter,temp,sigma_g,sigma_eta,loglik,best_loglik,accepted\n";
  for (const auto& r : res.trace)
    trace << r.iter << "," << fmt(r.temp) << "," << fmt(r.sigma_g) << "," << fmt(r.sigma_eta)
          << "," << fmt(r.loglik) << "," << fmt(r.best_loglik) << "," << (r.accepted ? 1 : 0)
          << "\n";
  std::cout << "mle: sigma_g_hat=" << res.sigma_g_hat << " sigma_eta_hat=" << res.sigma_eta_hat
            << "\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg) {
  const PreparedData data = prepare_data(cfg);
  const LookupGrid grid = make_grid(cfg, data, cfg.sigma_g);
  const double sigma2_g = cfg.sigma_g * cfg.sigma_g;
  const double sigma2_eta = cfg.sigma_eta * cfg.sigma_eta;

  std::ofstream meta(out_path(cfg, "fit_meta.txt"));
  for (const auto& m : output_meta(cfg)) meta << "# " << m << "\n";
  meta << "T=" << data.train.T() << "\n";
  meta << "grid_n=" << cfg.grid_n << "\n";
  meta << "sigma_g=" << fmt(cfg.sigma_g) << "\n";
  meta << "sigma_eta=" << fmt(cfg.sigma_eta) << "\n";
  if (data.trend) {
    meta << "trend.intercept=" << fmt(data.trend->intercept) << "\n";
    meta << "trend.slope=" << fmt(data.trend->slope) << "\n";
  }
  if (data.y_holdout) {
    meta << "holdout.y=" << fmt(*data.y_holdout) << "\n";
    meta << "holdout.t=" << fmt(*data.t_holdout) << "\n";
  }

  for (int c = 0; c < cfg.chains; ++c) {
    McmcConfig mc = cfg.mcmc;
    mc.seed = splitmix64(cfg.seed ^ (0x100ULL + static_cast<std::uint64_t>(c)));
    const SampleSet samples =
        run_chain(data.train.y, data.train.times, grid, cfg.priors, sigma2_g, sigma2_eta, mc);
    const std::string name =
        cfg.chains == 1 ? "samples.csv" : "samples_" + std::to_string(c + 1) + ".csv";
    write_sample_set(out_path(cfg, name).string(), samples, output_meta(cfg));
    for (const auto& [block, st] : samples.acceptance)
      meta << "accept." << (cfg.chains == 1 ? "" : std::to_string(c + 1) + ".") << block << "="
           << fmt(st.rate()) << "\n";
    meta << "max_audit_drift" << (cfg.chains == 1 ? "" : "." + std::to_string(c + 1)) << "="
         << fmt(samples.max_audit_drift) << "\n";
    std::cout << "fit: chain " << (c + 1) << "/" << cfg.chains << " kept " << samples.rows.size()
              << " draws\n";
  }
  return 0;
}

int column_index(const SampleSet& s, const std::string& name) {
  const auto it = std::find(s.columns.begin(), s.columns.end(), name);
  if (it == s.columns.end())
    throw std::runtime_error("sample set: missing column " + name);
  return static_cast<int>(it - s.columns.begin());
}

SampleSet load_samples(const RunConfig& cfg) {
  if (cfg.chains == 1) return read_sample_set(out_path(cfg, "samples.csv").string());
  SampleSet merged = read_sample_set(out_path(cfg, "samples_1.csv").string());
  for (int c = 2; c <= cfg.chains; ++c) {
    const SampleSet next =
        read_sample_set(out_path(cfg, "samples_" + std::to_string(c) + ".csv").string());
    if (next.columns != merged.columns)
      throw std::runtime_error("sample set: chain column mismatch");
    merged.rows.insert(merged.rows.end(), next.rows.begin(), next.rows.end());
  }
  return merged;
}

int cmd_forecast(const RunConfig& cfg) {
  const PreparedData data = prepare_data(cfg);
  const SampleSet samples = load_samples(cfg);
  const int T = data.train.T();
  if (samples.T != T)
    throw std::runtime_error("forecast: sample set T does not match the dataset");

  double t_next;
  if (data.t_holdout) {
    t_next = *data.t_holdout;
  } else {
    const double step = T >= 2 ? data.train.times[static_cast<std::size_t>(T - 1)] -
                                     data.train.times[static_cast<std::size_t>(T - 2)]
                               : 1.0;
    t_next = data.train.times[static_cast<std::size_t>(T - 1)] + step;
  }

  const int i_iter = column_index(samples, "iter");
  const int i_bf = column_index(samples, "beta_f_1");
  const int i_s2e = column_index(samples, "sigma2_eps");
  const int i_s2f = column_index(samples, "sigma2_f");
  const int i_x1 = column_index(samples, "x_1");
  const int i_xT1 = column_index(samples, "x_" + std::to_string(T + 1));

  Rng rng = Rng::substream(cfg.seed, 4);
  std::ofstream pred(out_path(cfg, "predictive.csv"));
  for (const auto& m : output_meta(cfg)) pred << "# " << m << "\n";
  pred << "iter,y_next\n";
  std::vector<double> draws;
  draws.reserve(samples.rows.size());
  for (const auto& row : samples.rows) {
    Eigen::Vector4d beta_f;
    for (int i = 0; i < 4; ++i) beta_f(i) = row[static_cast<std::size_t>(i_bf + i)];
    std::vector<Angle> x(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
      x[static_cast<std::size_t>(t)] = Angle::wrap(row[static_cast<std::size_t>(i_x1 + t)]);
    const PredictiveMoments m = predictive_moments(
        data.train.y, x, data.train.times, Angle::wrap(row[static_cast<std::size_t>(i_xT1)]),
        t_next, beta_f, row[static_cast<std::size_t>(i_s2e)], row[static_cast<std::size_t>(i_s2f)]);
    const double d = predictive_draw(m, rng);
    draws.push_back(d);
    pred << fmt(row[static_cast<std::size_t>(i_iter)]) << "," << fmt(d) << "\n";
  }

  const HpdInterval hpd = hpd_interval(draws, cfg.forecast_level);
  double mean = 0.0;
  for (double d : draws) mean += d;
  mean /= static_cast<double>(draws.size());

  std::ofstream sum(out_path(cfg, "forecast.txt"));
  for (const auto& m : output_meta(cfg)) sum << "# " << m << "\n";
  sum << "t_next=" << fmt(t_next) << "\n";
  sum << "level=" << fmt(cfg.forecast_level) << "\n";
  sum << "mean=" << fmt(mean) << "\n";
  sum << "hpd_lo=" << fmt(hpd.lo) << "\n";
  sum << "hpd_hi=" << fmt(hpd.hi) << "\n";
  if (data.y_holdout) {
    sum << "holdout=" << fmt(*data.y_holdout) << "\n";
    sum << "holdout_in_hpd=" << (hpd.contains(*data.y_holdout) ? 1 : 0) << "\n";
  }
  if (data.trend) {
    // Fits run on detrended residuals; report the original scale as well.
    const double shift = data.trend->apply(t_next);
    sum << "scale=detrended\n";
    sum << "original.mean=" << fmt(mean + shift) << "\n";
    sum << "original.hpd_lo=" << fmt(hpd.lo + shift) << "\n";
    sum << "original.hpd_hi=" << fmt(hpd.hi + shift) << "\n";
    if (data.y_holdout) sum << "original.holdout=" << fmt(*data.y_holdout + shift) << "\n";
  }
  std::cout << "forecast: mean=" << mean << " hpd=[" << hpd.lo << ", " << hpd.hi << "]\n";
  return 0;
}

int cmd_diagnose(const RunConfig& cfg) {
  const SampleSet samples = load_samples(cfg);
  const int T = samples.T;
  const int i_iter = column_index(samples, "iter");
  const int i_logp = column_index(samples, "logp");
  const int i_x1 = column_index(samples, "x_1");

  std::vector<std::vector<double>> latent;
  latent.reserve(samples.rows.size());
  for (const auto& row : samples.rows) {
    std::vector<double> xs(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) xs[static_cast<std::size_t>(t)] = row[static_cast<std::size_t>(i_x1 + t)];
    latent.push_back(std::move(xs));
  }
  const DensityGrid grid = latent_density_grid(latent, cfg.forecast_bins);

  std::ofstream dg(out_path(cfg, "density_grid.csv"));
  for (const auto& m : output_meta(cfg)) dg << "# " << m << "\n";
  dg << "t,bin,angle,mass\n";
  for (int t = 0; t < grid.T; ++t)
    for (int b = 0; b < grid.n_bins; ++b)
      dg << (t + 1) << "," << b << "," << fmt(grid.bin_center(b)) << "," << fmt(grid.mass(b, t))
         << "\n";

  std::ofstream med(out_path(cfg, "latent_median.csv"));
  for (const auto& m : output_meta(cfg)) med << "# " << m << "\n";
  med << "t,circular_median\n";
  for (int t = 0; t < grid.T; ++t)
    med << (t + 1) << "," << fmt(grid.circular_median[static_cast<std::size_t>(t)]) << "\n";

  std::ofstream trace(out_path(cfg, "trace.csv"));
  for (const auto& m : output_meta(cfg)) trace << "# " << m << "\n";
  trace << "iter,logp\n";
  for (const auto& row : samples.rows)
    trace << fmt(row[static_cast<std::size_t>(i_iter)]) << ","
          << fmt(row[static_cast<std::size_t>(i_logp)]) << "\n";

  // Acceptance rates come from the fit run's metadata.
  std::ifstream meta(out_path(cfg, "fit_meta.txt"));
  if (!meta)
    throw std::runtime_error("diagnose: fit_meta.txt not found in out dir; run fit first");
  std::ofstream acc(out_path(cfg, "acceptance.csv"));
  for (const auto& m : output_meta(cfg)) acc << "# " << m << "\n";
  acc << "block,rate\n";
  std::string line;
  while (std::getline(meta, line)) {
    if (line.rfind("accept.", 0) == 0) {
      const auto eq = line.find('=');
      acc << line.substr(7, eq - 7) << "," << line.substr(eq + 1) << "\n";
    }
  }
  std::cout << "diagnose: wrote density_grid.csv, latent_median.csv, trace.csv, acceptance.csv\n";
  return 0;
}

int cmd_validate_gp(const RunConfig& cfg) {
  std::ofstream out(out_path(cfg, "gp_validation.csv"));
  for (const auto& m : output_meta(cfg)) out << "# " << m << "\n";
  out << "case,psi,dt,dtheta,closed_form,oracle,abs_err,tol,pass\n";
  const double tol = 1e-6;
  bool all_pass = true;
  int id = 0;
  for (double psi : {0.5, 1.0, 2.0}) {
    const GpScale s = GpScale::from_psi(psi);
    for (double dt : {0.0, 0.5, 2.0}) {
      for (double dtheta : {0.0, M_PI / 4.0, M_PI / 2.0, M_PI}) {
        const LinCircPoint p1(1.0, 0.7);
        const LinCircPoint p2(1.0 + dt, 0.7 + dtheta);
        const double closed = cov(p1, p2, s);
        const QuadratureResult q = convolution_cov_oracle(p1, p2, psi, 2000);
        const double err = std::abs(closed - q.estimate);
        bool pass = err < tol;
        if (dtheta == M_PI / 2.0) pass = pass && std::abs(closed) < 1e-15;
        if (dt == 0.0 && dtheta == 0.0)
          pass = pass && std::abs(closed - 0.5 / psi) < 1e-12;
        all_pass = all_pass && pass;
        out << ++id << "," << fmt(psi) << "," << fmt(dt) << "," << fmt(dtheta) << ","
            << fmt(closed) << "," << fmt(q.estimate) << "," << fmt(err) << "," << fmt(tol) << ","
            << (pass ? 1 : 0) << "\n";
      }
    }
  }
  std::cout << "validate-gp: " << (all_pass ? "all cases pass" : "FAILURES present") << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int dispatch(const std::string& command, const RunConfig& cfg) {
  try {
    if (command == "simulate") return cmd_simulate(cfg);
    if (command == "mle") return cmd_mle(cfg);
    if (command == "fit") return cmd_fit(cfg);
    if (command == "forecast") return cmd_forecast(cfg);
    if (command == "diagnose") return cmd_diagnose(cfg);
    if (command == "validate-gp") return cmd_validate_gp(cfg);
    std::cerr << "unknown command: " << command << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace circssm
