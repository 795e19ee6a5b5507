"""Hierarchical Bayesian semiparametric bivariate zero-inflated Poisson
regression, fitted by Metropolis-within-Gibbs MCMC."""

__version__ = "0.1.0"

from .distributions import (
    BivPoisParams,
    CountPair,
    MixtureProbs,
    bivpois_logpmf,
    bivpois_moments,
    bivpois_sample,
    bivzip_logpmf,
    bivzip_sample,
)
from .model import (
    DesignBundle,
    IntensitySpec,
    ModelSpec,
    NonlinearTerm,
    PriorConfig,
    build_designs,
    ig_hyperparams_from_moments,
)
from .sampler import BivZipSampler, ChainOutput, RunConfig, run_chain
from .simulate import TruthSpec, recovery_harness, simulate_dataset

__all__ = [
    "BivPoisParams",
    "CountPair",
    "MixtureProbs",
    "bivpois_logpmf",
    "bivpois_moments",
    "bivpois_sample",
    "bivzip_logpmf",
    "bivzip_sample",
    "DesignBundle",
    "IntensitySpec",
    "ModelSpec",
    "NonlinearTerm",
    "PriorConfig",
    "build_designs",
    "ig_hyperparams_from_moments",
    "BivZipSampler",
    "ChainOutput",
    "RunConfig",
    "run_chain",
    "TruthSpec",
    "recovery_harness",
    "simulate_dataset",
]
