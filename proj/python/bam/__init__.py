"""Bayesian allocation models for count tensors.

Exact, sequential Monte Carlo, and variational marginal likelihoods for
nonnegative count tensors under Dirichlet-Gamma Bayesian-network priors.
"""

from ._core import (
    BamError,
    Model,
    Tensor,
    decompose,
    exact_log_marginal,
    log_marginal_allocation,
    missing_posterior,
    simulate,
    smc_log_marginal,
    vb_elbo,
)

__version__ = "1.0.0"

__all__ = [
    "BamError",
    "Model",
    "Tensor",
    "decompose",
    "exact_log_marginal",
    "log_marginal_allocation",
    "missing_posterior",
    "simulate",
    "smc_log_marginal",
    "vb_elbo",
    "__version__",
]
