"""Edgeworth-type expansions for sequences of symmetric functions of weights.

The package turns the cumulant/Edgeworth operator algebra into numbers by
contracting it against mixed derivatives of a model's limit function, and
checks the result against exact and Monte Carlo oracles for three models:
weighted sums (``model_clt``), quadratic von Mises statistics
(``model_vonmises``) and the weighted one-sided Kolmogorov-Smirnov statistic
(``model_ks``).
"""

from .engine import DerivativeProvider, ExpansionResult, FDProvider, berry_esseen_scale, expand, remainder_scale
from .errors import BudgetError, ContractError, ProviderError
from .fd import FDConfig, fd_derivative
from .opalgebra import (
    OperatorPolynomial,
    bracket,
    cumulant_operator,
    edgeworth_polynomial,
    substitute_tau,
    tilde_polynomial,
)
from .weights import WeightVector, equal_weights, normalize_to_sphere, sample_uniform_sphere

__version__ = "0.1.0"

__all__ = [
    "DerivativeProvider",
    "ExpansionResult",
    "FDProvider",
    "FDConfig",
    "OperatorPolynomial",
    "WeightVector",
    "ContractError",
    "BudgetError",
    "ProviderError",
    "berry_esseen_scale",
    "bracket",
    "cumulant_operator",
    "edgeworth_polynomial",
    "equal_weights",
    "expand",
    "fd_derivative",
    "normalize_to_sphere",
    "remainder_scale",
    "sample_uniform_sphere",
    "substitute_tau",
    "tilde_polynomial",
]
