"""Stochastic linear contextual bandits with sparse long-horizon rewards."""

__version__ = "0.1.0"

from .env import EnvConfig, Environment, WeightPattern, cumulative_regret
from .grouplasso import (
    LassoProblem,
    LassoSolution,
    block_soft_threshold,
    lambda_datapoor,
    lambda_datarich,
    solve,
)
from .linalg import (
    BlockVector,
    Rank1Factorization,
    matricize,
    toeplitz_matvec,
    top_singular_triplet,
    vectorize,
)

__all__ = [
    "__version__",
    "EnvConfig", "Environment", "WeightPattern", "cumulative_regret",
    "LassoProblem", "LassoSolution", "block_soft_threshold",
    "lambda_datapoor", "lambda_datarich", "solve",
    "BlockVector", "Rank1Factorization", "matricize", "toeplitz_matvec",
    "top_singular_triplet", "vectorize",
]
