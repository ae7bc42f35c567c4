"""Metropolis-within-Gibbs inference for level-set Cox models.

Three-step sweep: exact label resampling per cell, Langevin moves on the
parameter blocks, and Crank-Nicolson Langevin refreshes of the latent
fields in their spectral parameterization.
"""

from .chain import (ChainResult, effective_sample_size, posterior_summaries,
                    run_chain, split_rhat)
from .priors import PriorConfig, RangeBounds, log_exp_prior, log_normal_prior
from .spectral import SpectralOps
from .state import ChainState, FitSpec
from .updates import (StepState, gibbs_gamma, interweave_cov, mala_theta,
                      pcn_mala_field, pcn_step)

__all__ = [
    "ChainResult", "ChainState", "FitSpec", "PriorConfig", "RangeBounds",
    "SpectralOps", "StepState", "effective_sample_size", "gibbs_gamma",
    "interweave_cov", "log_exp_prior", "log_normal_prior", "mala_theta",
    "pcn_mala_field", "pcn_step", "posterior_summaries", "run_chain",
    "split_rhat",
]
