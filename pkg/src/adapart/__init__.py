"""Adaptive piecewise-constant density estimation on dyadic binary partitions."""

__version__ = "0.1.0"

from .density import PiecewiseDensity, TruthDensity, hellinger_exact, kl_exact, l1_exact, logratio_variance
from .errors import AdapartError, ArgumentError
from .inference import Dataset, exact_posterior, mcmc_posterior, posterior_mean_density, sieve_mle
from .partition import BinaryPartition, DyadicBox, count_partitions, enumerate_partitions
from .prior import PriorParams

__all__ = [
    "AdapartError",
    "ArgumentError",
    "BinaryPartition",
    "Dataset",
    "DyadicBox",
    "PiecewiseDensity",
    "PriorParams",
    "TruthDensity",
    "count_partitions",
    "enumerate_partitions",
    "exact_posterior",
    "hellinger_exact",
    "kl_exact",
    "l1_exact",
    "logratio_variance",
    "mcmc_posterior",
    "posterior_mean_density",
    "sieve_mle",
]
