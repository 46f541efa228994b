// Apache License, Version 2.0, refer to LICENSE.txt
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "circssm/anneal.hpp"
#include "circssm/forecast.hpp"
#include "circssm/io.hpp"
#include "circssm/mcmc.hpp"
#include "circssm/simulate.hpp"

namespace py = pybind11;
using namespace circssm;

namespace {

GridMode parse_mode(const std::string& mode) {
  if (mode == "time_scaled") return GridMode::time_scaled;
  if (mode == "paper_literal") return GridMode::paper_literal;
  throw std::invalid_argument("mode must be time_scaled or paper_literal");
}

std::vector<Angle> to_angles(const std::vector<double>& xs) {
  std::vector<Angle> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(Angle::wrap(x));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gaussian process state-space model with circular latent states";

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def_static("substream", &Rng::substream, py::arg("seed"), py::arg("stream"))
      .def("uniform", [](Rng& r) { return r.uniform(); })
      .def("normal", [](Rng& r) { return r.normal(); });

  m.def("mod_2pi", &mod_2pi, py::arg("x"));
  m.def(
      "von_mises_density",
      [](double theta, double mu, double kappa) {
        return von_mises_density(Angle::wrap(theta), {mu, kappa});
      },
      py::arg("theta"), py::arg("mu"), py::arg("kappa"));
  m.def(
      "von_mises_sample",
      [](double mu, double kappa, Rng& rng) { return von_mises_sample({mu, kappa}, rng).value; },
      py::arg("mu"), py::arg("kappa"), py::arg("rng"));
  m.def(
      "von_mises_mixture_sample",
      [](double center, const std::vector<double>& kappas, const std::vector<double>& weights,
         Rng& rng) {
        return von_mises_mixture_sample(Angle::wrap(center), kappas, weights, rng).value;
      },
      py::arg("center"), py::arg("kappas"), py::arg("weights"), py::arg("rng"));
  m.def("wrap_weight", &wrap_weight, py::arg("k"), py::arg("mu"), py::arg("sigma"));
  m.def("truncated_normal_sample", &truncated_normal_sample, py::arg("mu"), py::arg("sigma"),
        py::arg("lo"), py::arg("hi"), py::arg("rng"));
  m.def("discrete_rw_propose", &discrete_rw_propose, py::arg("k"), py::arg("var"), py::arg("rng"));

  m.def(
      "cov",
      [](double t1, double theta1, double t2, double theta2, double sigma) {
        return cov(LinCircPoint(t1, theta1), LinCircPoint(t2, theta2), GpScale(sigma));
      },
      py::arg("t1"), py::arg("theta1"), py::arg("t2"), py::arg("theta2"), py::arg("sigma"));
  m.def(
      "convolution_cov_oracle",
      [](double t1, double theta1, double t2, double theta2, double psi, int n_quad) {
        const QuadratureResult q =
            convolution_cov_oracle(LinCircPoint(t1, theta1), LinCircPoint(t2, theta2), psi, n_quad);
        return std::make_pair(q.estimate, q.error_bound);
      },
      py::arg("t1"), py::arg("theta1"), py::arg("t2"), py::arg("theta2"), py::arg("psi"),
      py::arg("n_quad") = 2000);

  py::class_<InvGammaForm>(m, "InvGammaForm")
      .def(py::init<>())
      .def_readwrite("alpha", &InvGammaForm::alpha)
      .def_readwrite("gamma", &InvGammaForm::gamma)
      .def("mode", &InvGammaForm::mode)
      .def("log_density", &InvGammaForm::log_density);

  py::class_<VonMisesParams>(m, "VonMisesParams")
      .def(py::init<>())
      .def_readwrite("mu", &VonMisesParams::mu)
      .def_readwrite("kappa", &VonMisesParams::kappa);

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init<>())
      .def_readwrite("beta_f", &ModelParams::beta_f)
      .def_readwrite("beta_g", &ModelParams::beta_g)
      .def_readwrite("sigma2_eps", &ModelParams::sigma2_eps)
      .def_readwrite("sigma2_eta", &ModelParams::sigma2_eta)
      .def_readwrite("sigma2_f", &ModelParams::sigma2_f)
      .def_readwrite("sigma2_g", &ModelParams::sigma2_g)
      .def_readwrite("beta_g_fixed_mask", &ModelParams::beta_g_fixed_mask);

  py::class_<PriorSpec>(m, "PriorSpec")
      .def(py::init<>())
      .def_readwrite("x0", &PriorSpec::x0)
      .def_readwrite("sigma2_eps", &PriorSpec::sigma2_eps)
      .def_readwrite("sigma2_eta", &PriorSpec::sigma2_eta)
      .def_readwrite("sigma2_f", &PriorSpec::sigma2_f)
      .def_readwrite("sigma2_g", &PriorSpec::sigma2_g)
      .def_readwrite("beta_f_mean", &PriorSpec::beta_f_mean)
      .def_readwrite("beta_f_cov", &PriorSpec::beta_f_cov)
      .def_readwrite("beta_g_mean", &PriorSpec::beta_g_mean)
      .def_readwrite("beta_g_cov", &PriorSpec::beta_g_cov);

  py::class_<LookupGrid>(m, "LookupGrid")
      .def_property_readonly("n", &LookupGrid::n)
      .def_property_readonly("corr", &LookupGrid::corr)
      .def(
          "points",
          [](const LookupGrid& g) {
            std::vector<std::pair<double, double>> pts;
            for (const auto& p : g.points()) pts.emplace_back(p.t, p.theta.value);
            return pts;
          });

  m.def(
      "build_grid",
      [](int n, double t_lo, double t_hi, const std::string& mode, double sigma_g,
         std::uint64_t seed) {
        Rng rng(seed);
        return build_grid(n, t_lo, t_hi, parse_mode(mode), GpScale(sigma_g), rng);
      },
      py::arg("n"), py::arg("t_lo"), py::arg("t_hi"), py::arg("mode"), py::arg("sigma_g"),
      py::arg("seed"));

  m.def(
      "generate_path",
      [](int T, const LookupGrid& grid, const ModelParams& p, const PriorSpec& prior,
         std::uint64_t seed) {
        Rng rng(seed);
        const GeneratedPath g = generate_path(T, grid, p, prior, rng);
        py::dict out;
        out["x0"] = g.path.x0.value;
        out["g1"] = g.path.g1;
        std::vector<double> xs, ks;
        for (int t = 1; t <= T + 1; ++t) {
          xs.push_back(g.path.x[t].value);
          ks.push_back(static_cast<double>(g.path.k[t]));
        }
        out["x"] = xs;
        out["k"] = ks;
        out["dz"] = g.dz;
        out["y"] = g.y;
        return out;
      },
      py::arg("T"), py::arg("grid"), py::arg("params"), py::arg("prior"), py::arg("seed"));

  py::class_<McmcConfig>(m, "McmcConfig")
      .def(py::init<>())
      .def_readwrite("n_iter", &McmcConfig::n_iter)
      .def_readwrite("burn_in", &McmcConfig::burn_in)
      .def_readwrite("thin", &McmcConfig::thin)
      .def_readwrite("sd_walk_var", &McmcConfig::sd_walk_var)
      .def_readwrite("x0_kappa", &McmcConfig::x0_kappa)
      .def_readwrite("xt_kappas", &McmcConfig::xt_kappas)
      .def_readwrite("xt_weights", &McmcConfig::xt_weights)
      .def_readwrite("k_walk_var", &McmcConfig::k_walk_var)
      .def_readwrite("k_max", &McmcConfig::k_max)
      .def_readwrite("seed", &McmcConfig::seed);

  m.def(
      "run_chain",
      [](const Eigen::VectorXd& y, const std::vector<double>& times, const LookupGrid& grid,
         const PriorSpec& priors, double sigma2_g, double sigma2_eta, const McmcConfig& cfg) {
        const SampleSet s = run_chain(y, times, grid, priors, sigma2_g, sigma2_eta, cfg);
        py::dict out;
        out["columns"] = s.columns;
        Eigen::MatrixXd rows(static_cast<Eigen::Index>(s.rows.size()),
                             static_cast<Eigen::Index>(s.columns.size()));
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
          for (Eigen::Index j = 0; j < rows.cols(); ++j)
            rows(i, j) = s.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        out["draws"] = rows;
        py::dict acc;
        for (const auto& [block, st] : s.acceptance) acc[py::str(block)] = st.rate();
        out["acceptance"] = acc;
        out["max_audit_drift"] = s.max_audit_drift;
        return out;
      },
      py::arg("y"), py::arg("times"), py::arg("grid"), py::arg("priors"), py::arg("sigma2_g"),
      py::arg("sigma2_eta"), py::arg("config"));

  m.def(
      "integrated_loglik_mc",
      [](double sigma_g, double sigma_eta, const Eigen::VectorXd& y,
         const std::vector<double>& times, const LookupGrid& grid, const PriorSpec& priors,
         int mc_samples, std::uint64_t seed) {
        Rng rng(seed);
        return integrated_loglik_mc(sigma_g, sigma_eta, y, times, grid, priors, mc_samples, rng);
      },
      py::arg("sigma_g"), py::arg("sigma_eta"), py::arg("y"), py::arg("times"), py::arg("grid"),
      py::arg("priors"), py::arg("mc_samples"), py::arg("seed"));

  py::class_<AnnealConfig>(m, "AnnealConfig")
      .def(py::init<>())
      .def_readwrite("init_sigma_g", &AnnealConfig::init_sigma_g)
      .def_readwrite("init_sigma_eta", &AnnealConfig::init_sigma_eta)
      .def_readwrite("proposal_sd", &AnnealConfig::proposal_sd)
      .def_readwrite("temp0", &AnnealConfig::temp0)
      .def_readwrite("cooling", &AnnealConfig::cooling)
      .def_readwrite("n_iter", &AnnealConfig::n_iter)
      .def_readwrite("mc_samples", &AnnealConfig::mc_samples)
      .def_readwrite("seed", &AnnealConfig::seed);

  m.def(
      "anneal",
      [](const Eigen::VectorXd& y, const std::vector<double>& times, const LookupGrid& grid,
         const PriorSpec& priors, const AnnealConfig& cfg) {
        const AnnealResult r = anneal(y, times, grid, priors, cfg);
        py::dict out;
        out["sigma_g_hat"] = r.sigma_g_hat;
        out["sigma_eta_hat"] = r.sigma_eta_hat;
        out["best_loglik"] = r.best_loglik;
        return out;
      },
      py::arg("y"), py::arg("times"), py::arg("grid"), py::arg("priors"), py::arg("config"));

  m.def(
      "simulate_nonlinear",
      [](int T, double alpha, double beta, double gamma, double sigma_u, double sigma_v,
         double theta0, std::uint64_t seed) {
        NonlinearSimConfig cfg{T, alpha, beta, gamma, sigma_u, sigma_v, theta0, seed};
        const NonlinearSim sim = simulate_nonlinear(cfg);
        std::vector<double> theta;
        for (const auto& a : sim.theta) theta.push_back(a.value);
        return std::make_pair(sim.y, theta);
      },
      py::arg("T") = 101, py::arg("alpha") = 0.05, py::arg("beta") = 0.1, py::arg("gamma") = 0.2,
      py::arg("sigma_u") = 0.1, py::arg("sigma_v") = 0.1, py::arg("theta0") = M_PI,
      py::arg("seed") = 1);

  m.def(
      "predictive_moments",
      [](const Eigen::VectorXd& y, const std::vector<double>& x, const std::vector<double>& times,
         double x_next, double t_next, const Eigen::Vector4d& beta_f, double sigma2_eps,
         double sigma2_f) {
        const PredictiveMoments pm = predictive_moments(y, to_angles(x), times,
                                                        Angle::wrap(x_next), t_next, beta_f,
                                                        sigma2_eps, sigma2_f);
        return std::make_pair(pm.mean, pm.var);
      },
      py::arg("y"), py::arg("x"), py::arg("times"), py::arg("x_next"), py::arg("t_next"),
      py::arg("beta_f"), py::arg("sigma2_eps"), py::arg("sigma2_f"));

  m.def(
      "hpd_interval",
      [](std::vector<double> samples, double level) {
        const HpdInterval h = hpd_interval(std::move(samples), level);
        return std::make_pair(h.lo, h.hi);
      },
      py::arg("samples"), py::arg("level"));

  m.def(
      "latent_density_grid",
      [](const std::vector<std::vector<double>>& draws, int n_bins) {
        const DensityGrid g = latent_density_grid(draws, n_bins);
        py::dict out;
        out["mass"] = g.mass;
        out["circular_median"] = g.circular_median;
        return out;
      },
      py::arg("draws"), py::arg("n_bins") = 100);

  m.attr("__version__") = "0.1.0";
}
