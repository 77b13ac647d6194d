"""Posterior inference: latent counts, HMC, hyperparameter MH, chains."""

from .chain import (
    ChainSamples,
    ChainState,
    SamplerConfig,
    approx_log_posterior,
    initialize_chain,
    run_chain,
    run_chains,
    sweep,
)
from .hmc import (
    NumericalOverflow,
    beta1_flip_logit,
    gibbs_update_beta1,
    hmc_update,
    leapfrog,
    potential_and_gradient,
)
from .hyper import laplace_exponent, mh_update_hyperparams, sample_total_masses
from .latent import LatentCounts, resample_latent_counts, sample_truncated_poisson

__all__ = [
    "ChainSamples", "ChainState", "SamplerConfig", "approx_log_posterior",
    "initialize_chain", "run_chain", "run_chains", "sweep", "NumericalOverflow",
    "beta1_flip_logit", "gibbs_update_beta1", "hmc_update", "leapfrog",
    "potential_and_gradient", "laplace_exponent", "mh_update_hyperparams",
    "sample_total_masses", "LatentCounts", "resample_latent_counts",
    "sample_truncated_poisson",
]
