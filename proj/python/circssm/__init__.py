"""Gaussian process state-space modeling with circular latent states."""

from ._core import (  # noqa: F401
    AnnealConfig,
    InvGammaForm,
    LookupGrid,
    McmcConfig,
    ModelParams,
    PriorSpec,
    Rng,
    VonMisesParams,
    anneal,
    build_grid,
    convolution_cov_oracle,
    cov,
    discrete_rw_propose,
    generate_path,
    hpd_interval,
    integrated_loglik_mc,
    latent_density_grid,
    mod_2pi,
    predictive_moments,
    run_chain,
    simulate_nonlinear,
    truncated_normal_sample,
    von_mises_density,
    von_mises_mixture_sample,
    von_mises_sample,
    wrap_weight,
)

__version__ = "0.1.0"
