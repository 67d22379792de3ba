"""Characteristic function of a weighted sum ``S = sum_j eps_j X_j``.

``h_n(eps) = E exp(i t S)`` with ``E X = 0`` and ``E X^2 = 1``.  Its limit
function is ``h_inf(l_1..l_m) = E exp(i t (l_1 X_1 + ... + l_m X_m + G))``
with ``G`` standard normal, whose mixed derivatives at zero are products of
moments of ``X``.  Three distributions with closed-form characteristic
functions provide exact oracles; arbitrary moment sequences are accepted for
the analytic provider alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .engine import DerivativeProvider, ExpansionResult, FDProvider, _require_unit, expand
from .errors import ContractError
from .fd import FDConfig
from .opalgebra import DMonomial
from .weights import WeightVector

__all__ = [
    "CltModel",
    "CltProvider",
    "clt_provider",
    "clt_limit_evaluator",
    "clt_fd_provider",
    "exact_char_product",
    "short_expansion",
    "short_remainder_scale",
    "clt_expand",
    "parse_distribution",
    "DISTRIBUTIONS",
]

DISTRIBUTIONS = ("rademacher", "uniform_sqrt3", "two_point", "custom")
_MOMENT_ORDER = 16


@dataclass(frozen=True)
class CltModel:
    """Distribution of ``X`` (through its moments) and the cf argument ``t``.

    ``moments[k]`` is ``beta_k = E X^k`` for ``k >= 2``.
    """

    t: float
    distribution: str
    moments: dict[int, float] = field(hash=False)
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if abs(self.moments.get(2, float("nan")) - 1.0) > 1e-12:
            raise ContractError("the variables must have unit variance (beta_2 = 1)")

    @classmethod
    def rademacher(cls, t: float) -> "CltModel":
        moments = {k: float(k % 2 == 0) for k in range(2, _MOMENT_ORDER + 1)}
        return cls(float(t), "rademacher", moments)

    @classmethod
    def uniform_sqrt3(cls, t: float) -> "CltModel":
        # X uniform on [-sqrt 3, sqrt 3]: E X^k = 3^(k/2) / (k + 1) for even k
        moments = {
            k: (float(Fraction(3 ** (k // 2), k + 1)) if k % 2 == 0 else 0.0)
            for k in range(2, _MOMENT_ORDER + 1)
        }
        return cls(float(t), "uniform_sqrt3", moments)

    @classmethod
    def two_point(cls, t: float, p: float, x_plus: float, x_minus: float) -> "CltModel":
        """``X = x_plus`` with probability ``p``, otherwise ``x_minus``."""
        if not 0.0 < p < 1.0:
            raise ValueError("two-point probability must lie in (0, 1)")
        # exact rational moments when the parameters are exactly representable
        fp, fa, fb = Fraction(p), Fraction(x_plus), Fraction(x_minus)
        mean = fp * fa + (1 - fp) * fb
        var = fp * fa**2 + (1 - fp) * fb**2
        if abs(float(mean)) > 1e-12 or abs(float(var) - 1.0) > 1e-12:
            raise ContractError(f"two-point law must have mean 0 and variance 1 (got {float(mean)}, {float(var)})")
        moments = {k: float(fp * fa**k + (1 - fp) * fb**k) for k in range(2, _MOMENT_ORDER + 1)}
        return cls(float(t), "two_point", moments, (float(p), float(x_plus), float(x_minus)))

    @classmethod
    def from_moments(cls, t: float, higher: list[float]) -> "CltModel":
        """Moments ``beta_3, beta_4, ...`` supplied directly (no exact oracle)."""
        moments = {2: 1.0}
        moments.update({k + 3: float(b) for k, b in enumerate(higher)})
        return cls(float(t), "custom", moments)

    def beta(self, k: int) -> float:
        if k == 1:
            return 0.0
        if k == 2:
            return 1.0
        if k not in self.moments:
            raise ContractError(f"moment beta_{k} was not supplied")
        return self.moments[k]

    def single_cf(self, u: np.ndarray) -> np.ndarray:
        """Characteristic function ``E exp(i u X)`` (vectorised)."""
        u = np.asarray(u, dtype=float)
        if self.distribution == "rademacher":
            return np.cos(u).astype(complex)
        if self.distribution == "uniform_sqrt3":
            return np.sinc(math.sqrt(3.0) * u / math.pi).astype(complex)
        if self.distribution == "two_point":
            p, a, b = self.params
            return p * np.exp(1j * u * a) + (1.0 - p) * np.exp(1j * u * b)
        raise ContractError("no exact oracle for a moments-only model")

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.distribution == "rademacher":
            return rng.integers(0, 2, size=shape) * 2.0 - 1.0
        if self.distribution == "uniform_sqrt3":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=shape)
        if self.distribution == "two_point":
            p, a, b = self.params
            return np.where(rng.random(shape) < p, a, b)
        raise ContractError("cannot sample from a moments-only model")


def parse_distribution(text: str, t: float) -> CltModel:
    """``rademacher``, ``uniform``, ``twopoint:p:xp:xm`` or ``moments:b3:b4:...``."""
    kind, _, rest = text.partition(":")
    if kind == "rademacher":
        return CltModel.rademacher(t)
    if kind in ("uniform", "uniform_sqrt3"):
        return CltModel.uniform_sqrt3(t)
    if kind in ("twopoint", "two_point"):
        p, xp, xm = (float(x) for x in rest.split(":"))
        return CltModel.two_point(t, p, xp, xm)
    if kind == "moments":
        return CltModel.from_moments(t, [float(x) for x in rest.split(":") if x])
    raise ValueError(f"unknown distribution {text!r}")


class CltProvider(DerivativeProvider):
    """``(it)^{sum a} exp(-t^2/2) prod_j beta_{a_j}``."""

    accuracy = "exact-analytic"

    def __init__(self, model: CltModel):
        self.model = model

    def derivative(self, orders: DMonomial) -> complex:
        t = self.model.t
        value = complex(math.exp(-t * t / 2.0)) * (1j * t) ** sum(orders)
        for a in orders:
            value *= self.model.beta(a)
        return value


def clt_provider(m: CltModel) -> CltProvider:
    return CltProvider(m)


def clt_limit_evaluator(m: CltModel):
    """Vectorised ``h_inf(l) = exp(-t^2/2) prod_j phi_X(t l_j)``."""
    m.single_cf(np.zeros(1))  # fail early for moments-only models
    gauss = math.exp(-m.t * m.t / 2.0)

    def evaluate(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return gauss * np.prod(m.single_cf(m.t * points), axis=1)

    return evaluate


def clt_fd_provider(m: CltModel, config: FDConfig | None = None) -> FDProvider:
    return FDProvider(clt_limit_evaluator(m), config)


def exact_char_product(m: CltModel, w: WeightVector) -> complex:
    """``E exp(i t S) = prod_j phi_X(t eps_j)``."""
    factors = m.single_cf(m.t * w.as_array())
    return complex(np.prod(factors))


def short_expansion(m: CltModel, w: WeightVector) -> complex:
    """Leading term plus the ``eps^3`` correction; the remainder is of order
    ``t^4 sum eps_k^4`` (see :func:`short_remainder_scale`)."""
    _require_unit(w)
    t = m.t
    gauss = math.exp(-t * t / 2.0)
    return gauss + w.power_sum(3) / 6.0 * (1j * t) ** 3 * m.beta(3) * gauss


def short_remainder_scale(m: CltModel, w: WeightVector) -> float:
    return m.t**4 * w.power_sum(4)


def clt_expand(m: CltModel, w: WeightVector, s: int, **kwargs) -> ExpansionResult:
    return expand(CltProvider(m), w, s, **kwargs)

