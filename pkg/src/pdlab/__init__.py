"""Poisson-Dirichlet sampling, the law of the largest atom, and small-mutation
large-deviation rate functions with numerical checks."""

__version__ = "0.1.0"

from .core import OrderedFrequencies, SimplexPointM, classify_ladder, equal_weights, speed
from .density import DensityTable, NormalizationError, check_functional_eq, normalization, solve_g1
from .ratefn import (h_r, min_hr_on_Ln, rate_I, rate_In, rate_J, rate_S, rate_S1, rate_Sm,
                     rate_Sprime, tilted_sup)
from .sampler import RngStream, sample_dirichlet_process, sample_gem, sample_pd, sample_pd_batch

__all__ = [
    "OrderedFrequencies", "SimplexPointM", "classify_ladder", "equal_weights", "speed",
    "DensityTable", "NormalizationError", "check_functional_eq", "normalization", "solve_g1",
    "h_r", "min_hr_on_Ln", "rate_I", "rate_In", "rate_J", "rate_S", "rate_S1", "rate_Sm",
    "rate_Sprime", "tilted_sup",
    "RngStream", "sample_dirichlet_process", "sample_gem", "sample_pd", "sample_pd_batch",
]
