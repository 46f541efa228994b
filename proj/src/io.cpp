// Apache License, Version 2.0, refer to LICENSE.txt
#include "circssm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "circssm/util.hpp"

namespace circssm {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(what + ": cannot parse number '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(v))
    throw std::runtime_error(what + ": invalid or non-finite number '" + s + "'");
  return v;
}

}  // namespace

Dataset read_dataset(const std::string& path, bool degrees) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset: cannot open " + path);
  Dataset ds;
  std::vector<double> ys;
  std::string line;
  long lineno = 0;
  bool header_seen = false;
  bool has_theta = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!header_seen) {
      const auto cols = split(t, ',');
      if (cols.size() < 2 || trim(cols[0]) != "t" || trim(cols[1]) != "y")
        throw std::runtime_error("read_dataset: bad header at line " + std::to_string(lineno) +
                                 ", expected t,y[,theta_true]");
      if (cols.size() == 3 && trim(cols[2]) == "theta_true")
        has_theta = true;
      else if (cols.size() > 2)
        throw std::runtime_error("read_dataset: unexpected header columns at line " +
                                 std::to_string(lineno));
      header_seen = true;
      continue;
    }
    const auto cols = split(t, ',');
    const std::size_t want = has_theta ? 3 : 2;
    if (cols.size() != want)
      throw std::runtime_error("read_dataset: wrong column count at line " +
                               std::to_string(lineno));
    const std::string where = "read_dataset line " + std::to_string(lineno);
    const double tv = parse_double(trim(cols[0]), where);
    const double yv = parse_double(trim(cols[1]), where);
    if (!ds.times.empty() && !(tv > ds.times.back()))
      throw std::runtime_error("read_dataset: non-increasing t at line " + std::to_string(lineno));
    ds.times.push_back(tv);
    ys.push_back(yv);
    if (has_theta) {
      double th = parse_double(trim(cols[2]), where);
      if (degrees) th *= M_PI / 180.0;
      ds.theta_true.push_back(mod_2pi(th));
    }
  }
  if (!header_seen) throw std::runtime_error("read_dataset: empty file " + path);
  ds.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds,
                   const std::vector<std::string>& meta_lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
  for (const auto& m : meta_lines) out << "# " << m << "\n";
  out << (ds.has_theta() ? "t,y,theta_true\n" : "t,y\n");
  for (int i = 0; i < ds.T(); ++i) {
    out << fmt(ds.times[static_cast<std::size_t>(i)]) << "," << fmt(ds.y(i));
    if (ds.has_theta()) out << "," << fmt(ds.theta_true[static_cast<std::size_t>(i)]);
    out << "\n";
  }
}

std::pair<Dataset, TrendCoeffs> detrend_linear(const Dataset& ds) {
  if (ds.T() < 3) throw std::invalid_argument("detrend_linear: need T >= 3");
  const int T = ds.T();
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  for (int i = 0; i < T; ++i) {
    const double t = ds.times[static_cast<std::size_t>(i)];
    st += t;
    sy += ds.y(i);
    stt += t * t;
    sty += t * ds.y(i);
  }
  const double denom = T * stt - st * st;
  if (std::abs(denom) < 1e-12 * std::max(1.0, stt))
    throw std::runtime_error("detrend_linear: degenerate design (constant t)");
  TrendCoeffs c;
  c.slope = (T * sty - st * sy) / denom;
  c.intercept = (sy - c.slope * st) / T;
  Dataset out = ds;
  for (int i = 0; i < T; ++i) out.y(i) = ds.y(i) - c.apply(ds.times[static_cast<std::size_t>(i)]);
  return {std::move(out), c};
}

void write_sample_set(const std::string& path, const SampleSet& samples,
                      const std::vector<std::string>& meta_lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_sample_set: cannot open " + path);
  for (const auto& m : meta_lines) out << "# " << m << "\n";
  for (std::size_t i = 0; i < samples.columns.size(); ++i)
    out << (i ? "," : "") << samples.columns[i];
  out << "\n";
  for (const auto& row : samples.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt(row[i]);
    out << "\n";
  }
}

SampleSet read_sample_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_sample_set: cannot open " + path);
  SampleSet s;
  std::string line;
  long lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cols = split(t, ',');
    if (!header_seen) {
      s.columns.assign(cols.begin(), cols.end());
      header_seen = true;
      continue;
    }
    if (cols.size() != s.columns.size())
      throw std::runtime_error("read_sample_set: wrong column count at line " +
                               std::to_string(lineno));
    std::vector<double> row;
    row.reserve(cols.size());
    for (const auto& c : cols)
      row.push_back(parse_double(trim(c), "read_sample_set line " + std::to_string(lineno)));
    s.rows.push_back(std::move(row));
  }
  if (!header_seen) throw std::runtime_error("read_sample_set: empty file " + path);
  // Recover T from the trailing K columns.
  int n_k = 0;
  for (const auto& c : s.columns)
    if (c.rfind("K_", 0) == 0) ++n_k;
  s.T = n_k - 1;
  return s;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

using KvMap = std::map<std::string, std::string>;

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<double> parse_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& part : split(v, ';'))
    out.push_back(parse_double(trim(part), "config key " + key));
  return out;
}

Eigen::Vector4d parse_vec4(const std::string& v, const std::string& key) {
  const auto vals = parse_list(v, key);
  if (vals.size() != 4) throw std::runtime_error("config: " + key + " needs 4 values");
  return {vals[0], vals[1], vals[2], vals[3]};
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' at line " + std::to_string(lineno));
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config: empty key at line " + std::to_string(lineno));
    if (kv.count(key)) throw std::runtime_error("config: duplicate key " + key);
    kv[key] = val;
  }

  RunConfig cfg;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto take_double = [&](const std::string& key, double& dst) {
    if (auto v = take(key)) dst = parse_double(*v, "config key " + key);
  };
  auto take_long = [&](const std::string& key, auto& dst) {
    if (auto v = take(key)) dst = static_cast<std::decay_t<decltype(dst)>>(
        std::llround(parse_double(*v, "config key " + key)));
  };
  auto take_bool = [&](const std::string& key, bool& dst) {
    if (auto v = take(key)) dst = parse_bool(*v, key);
  };

  if (auto v = take("seed"))
    cfg.seed = static_cast<std::uint64_t>(std::stoull(*v));
  else
    throw std::runtime_error("config: mandatory key 'seed' missing");
  if (auto v = take("out")) cfg.out_dir = *v;
  take_long("chains", cfg.chains);

  if (auto v = take("data.path")) cfg.data_path = *v;
  take_bool("data.degrees", cfg.data_degrees);
  take_bool("data.holdout_last", cfg.data_holdout_last);
  take_bool("data.detrend", cfg.data_detrend);

  take_long("grid.n", cfg.grid_n);
  if (auto v = take("grid.mode")) {
    if (*v == "time_scaled")
      cfg.grid_mode = GridMode::time_scaled;
    else if (*v == "paper_literal")
      cfg.grid_mode = GridMode::paper_literal;
    else
      throw std::runtime_error("config: grid.mode must be time_scaled or paper_literal");
  }

  take_double("model.sigma_g", cfg.sigma_g);
  take_double("model.sigma_eta", cfg.sigma_eta);

  take_double("prior.x0_mu", cfg.priors.x0.mu);
  take_double("prior.x0_kappa", cfg.priors.x0.kappa);
  if (auto v = take("prior.beta_f_mean")) cfg.priors.beta_f_mean = parse_vec4(*v, "prior.beta_f_mean");
  if (auto v = take("prior.beta_f_var")) {
    cfg.priors.beta_f_cov = parse_vec4(*v, "prior.beta_f_var").asDiagonal();
  }
  if (auto v = take("prior.beta_g_mean")) cfg.priors.beta_g_mean = parse_vec4(*v, "prior.beta_g_mean");
  if (auto v = take("prior.beta_g_var")) {
    cfg.priors.beta_g_cov = parse_vec4(*v, "prior.beta_g_var").asDiagonal();
  }
  take_double("prior.eps_alpha", cfg.priors.sigma2_eps.alpha);
  take_double("prior.eps_gamma", cfg.priors.sigma2_eps.gamma);
  take_double("prior.f_alpha", cfg.priors.sigma2_f.alpha);
  take_double("prior.f_gamma", cfg.priors.sigma2_f.gamma);
  take_double("prior.eta_alpha", cfg.priors.sigma2_eta.alpha);
  take_double("prior.eta_gamma", cfg.priors.sigma2_eta.gamma);
  take_double("prior.g_alpha", cfg.priors.sigma2_g.alpha);
  take_double("prior.g_gamma", cfg.priors.sigma2_g.gamma);

  take_long("mcmc.n_iter", cfg.mcmc.n_iter);
  take_long("mcmc.burn_in", cfg.mcmc.burn_in);
  take_long("mcmc.thin", cfg.mcmc.thin);
  take_double("mcmc.sd_walk_var", cfg.mcmc.sd_walk_var);
  take_bool("mcmc.log_scale_variance_walk", cfg.mcmc.log_scale_variance_walk);
  take_double("mcmc.x0_kappa", cfg.mcmc.x0_kappa);
  if (auto v = take("mcmc.xt_kappas")) cfg.mcmc.xt_kappas = parse_list(*v, "mcmc.xt_kappas");
  if (auto v = take("mcmc.xt_weights")) cfg.mcmc.xt_weights = parse_list(*v, "mcmc.xt_weights");
  take_double("mcmc.k_walk_var", cfg.mcmc.k_walk_var);
  take_long("mcmc.k_max", cfg.mcmc.k_max);
  take_bool("mcmc.sample_evolution_variances", cfg.mcmc.sample_evolution_variances);
  take_long("mcmc.self_audit_every", cfg.mcmc.self_audit_every);
  take_long("mcmc.af_rebuild_every", cfg.mcmc.af_rebuild_every);

  take_double("anneal.sigma_g_init", cfg.annealing.init_sigma_g);
  take_double("anneal.sigma_eta_init", cfg.annealing.init_sigma_eta);
  take_double("anneal.proposal_sd", cfg.annealing.proposal_sd);
  take_double("anneal.temp0", cfg.annealing.temp0);
  take_double("anneal.cooling", cfg.annealing.cooling);
  take_long("anneal.n_iter", cfg.annealing.n_iter);
  take_long("anneal.mc_samples", cfg.annealing.mc_samples);

  if (auto v = take("sim.kind")) {
    if (*v != "nonlinear" && *v != "model")
      throw std::runtime_error("config: sim.kind must be nonlinear or model");
    cfg.sim_kind = *v;
  }
  take_long("sim.T", cfg.sim.T);
  take_double("sim.alpha", cfg.sim.alpha);
  take_double("sim.beta", cfg.sim.beta);
  take_double("sim.gamma", cfg.sim.gamma);
  take_double("sim.sigma_u", cfg.sim.sigma_u);
  take_double("sim.sigma_v", cfg.sim.sigma_v);
  take_double("sim.theta0", cfg.sim.theta0);
  take_long("sim.model_T", cfg.sim_model_T);

  take_double("forecast.level", cfg.forecast_level);
  take_long("forecast.bins", cfg.forecast_bins);

  if (!kv.empty()) {
    std::string offenders;
    for (const auto& [k, v] : kv) offenders += (offenders.empty() ? "" : ", ") + k;
    throw std::runtime_error("config: unknown key(s): " + offenders);
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  auto put = [&](const std::string& k, const std::string& v) { out << k << "=" << v << "\n"; };
  auto putd = [&](const std::string& k, double v) { put(k, fmt(v)); };
  auto vec4 = [&](const Eigen::Vector4d& v) {
    return fmt(v(0)) + ";" + fmt(v(1)) + ";" + fmt(v(2)) + ";" + fmt(v(3));
  };
  put("seed", std::to_string(seed));
  put("chains", std::to_string(chains));
  put("data.path", data_path);
  put("data.degrees", data_degrees ? "true" : "false");
  put("data.holdout_last", data_holdout_last ? "true" : "false");
  put("data.detrend", data_detrend ? "true" : "false");
  put("grid.n", std::to_string(grid_n));
  put("grid.mode", grid_mode == GridMode::time_scaled ? "time_scaled" : "paper_literal");
  putd("model.sigma_g", sigma_g);
  putd("model.sigma_eta", sigma_eta);
  putd("prior.x0_mu", priors.x0.mu);
  putd("prior.x0_kappa", priors.x0.kappa);
  put("prior.beta_f_mean", vec4(priors.beta_f_mean));
  put("prior.beta_f_var", vec4(priors.beta_f_cov.diagonal()));
  put("prior.beta_g_mean", vec4(priors.beta_g_mean));
  put("prior.beta_g_var", vec4(priors.beta_g_cov.diagonal()));
  putd("prior.eps_alpha", priors.sigma2_eps.alpha);
  putd("prior.eps_gamma", priors.sigma2_eps.gamma);
  putd("prior.f_alpha", priors.sigma2_f.alpha);
  putd("prior.f_gamma", priors.sigma2_f.gamma);
  putd("prior.eta_alpha", priors.sigma2_eta.alpha);
  putd("prior.eta_gamma", priors.sigma2_eta.gamma);
  putd("prior.g_alpha", priors.sigma2_g.alpha);
  putd("prior.g_gamma", priors.sigma2_g.gamma);
  put("mcmc.n_iter", std::to_string(mcmc.n_iter));
  put("mcmc.burn_in", std::to_string(mcmc.burn_in));
  put("mcmc.thin", std::to_string(mcmc.thin));
  putd("mcmc.sd_walk_var", mcmc.sd_walk_var);
  put("mcmc.log_scale_variance_walk", mcmc.log_scale_variance_walk ? "true" : "false");
  putd("mcmc.x0_kappa", mcmc.x0_kappa);
  {
    std::string ks, ws;
    for (std::size_t i = 0; i < mcmc.xt_kappas.size(); ++i)
      ks += (i ? ";" : "") + fmt(mcmc.xt_kappas[i]);
    for (std::size_t i = 0; i < mcmc.xt_weights.size(); ++i)
      ws += (i ? ";" : "") + fmt(mcmc.xt_weights[i]);
    put("mcmc.xt_kappas", ks);
    put("mcmc.xt_weights", ws);
  }
  putd("mcmc.k_walk_var", mcmc.k_walk_var);
  put("mcmc.k_max", std::to_string(mcmc.k_max));
  put("mcmc.sample_evolution_variances", mcmc.sample_evolution_variances ? "true" : "false");
  put("mcmc.self_audit_every", std::to_string(mcmc.self_audit_every));
  put("mcmc.af_rebuild_every", std::to_string(mcmc.af_rebuild_every));
  putd("anneal.sigma_g_init", annealing.init_sigma_g);
  putd("anneal.sigma_eta_init", annealing.init_sigma_eta);
  putd("anneal.proposal_sd", annealing.proposal_sd);
  putd("anneal.temp0", annealing.temp0);
  putd("anneal.cooling", annealing.cooling);
  put("anneal.n_iter", std::to_string(annealing.n_iter));
  put("anneal.mc_samples", std::to_string(annealing.mc_samples));
  put("sim.kind", sim_kind);
  put("sim.T", std::to_string(sim.T));
  putd("sim.alpha", sim.alpha);
  putd("sim.beta", sim.beta);
  putd("sim.gamma", sim.gamma);
  putd("sim.sigma_u", sim.sigma_u);
  putd("sim.sigma_v", sim.sigma_v);
  putd("sim.theta0", sim.theta0);
  put("sim.model_T", std::to_string(sim_model_T));
  putd("forecast.level", forecast_level);
  put("forecast.bins", std::to_string(forecast_bins));
  return out.str();
}

std::string RunConfig::config_hash() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

std::vector<std::string> output_meta(const RunConfig& cfg) {
  return {"config_hash=" + cfg.config_hash() + " seed=" + std::to_string(cfg.seed) +
          " version=" + version_string()};
}

}  // namespace circssm
