"""Weighted one-sided Kolmogorov-Smirnov statistic.

``D+(t) = sum_j eps_j (1{X_j <= t} - t)`` for uniform ``X_j``; the quantity
of interest is ``h_n(eps) = P(sup_t D+(t) > a)``.

Limit function
--------------
With one extra observation of weight ``l`` at location ``s`` the limiting
process is ``x(t) + l (1{s <= t} - t)`` for a Brownian bridge ``x``.  Given
``x(s) = x`` the two halves are independent bridges, and the boundary
crossing probabilities of the lines ``a + l t`` on ``[0, s]`` and
``a - l (1 - t)`` on ``[s, 1]`` are

    f_a(s, x, l)      = exp(-2a(a + l s - x)/s)          (x < a + l s, else 1)
    f_a(1 - s, x, -l) = exp(-2a(a - l(1 - s) - x)/(1 - s))

so that ``h_inf(l) = int_0^1 E[1 - (1 - f_a(s,.,l))(1 - f_a(1-s,.,-l))] ds``
with ``x ~ N(0, s(1 - s))``.  At ``l = 0`` the inner expectation equals
``exp(-2a^2)`` for every ``s``.

``h_inf`` is even in ``l`` with a ``|l|^3`` term, so its third derivative is
taken from the right (``l -> 0+``); that one-sided value equals
``d/da exp(-2a^2)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import log_ndtr, ndtr

from .engine import DerivativeProvider, _require_unit
from .errors import ContractError
from .fd import FDConfig, fd_derivative
from .opalgebra import DMonomial
from .rng import DOMAIN_KS, stream
from .weights import WeightVector

__all__ = [
    "KsModel",
    "KsProvider",
    "ks_limit_fn",
    "ks_expansion",
    "ks_derivative_check",
    "mc_ks_exceedance",
    "sup_statistic",
    "KS_FD",
    "BLOCK",
    "MIN_REPS",
]

KS_FD = FDConfig(step=0.02, accuracy=4, one_sided=True)
BLOCK = 1 << 14
MIN_REPS = 10**4


@dataclass(frozen=True)
class KsModel:
    """Threshold ``a`` plus quadrature and Monte Carlo settings.

    ``inner="exact"`` integrates the Gaussian variable in closed form on each
    side of the clamping kink; ``inner="hermite"`` uses ``n_x`` Gauss-Hermite
    nodes instead.
    """

    a: float
    n_s: int = 64
    n_x: int = 64
    reps: int = 10**6
    seed: int = 0
    inner: str = "exact"
    fd: FDConfig = field(default=KS_FD)

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("threshold a must be positive")
        if self.n_s < 16 or self.n_x < 16:
            raise ValueError("quadrature node counts must be >= 16")
        if self.inner not in ("exact", "hermite"):
            raise ValueError("inner must be 'exact' or 'hermite'")

    @property
    def leading(self) -> float:
        return math.exp(-2.0 * self.a * self.a)


def _segment(alpha, beta, lo, hi, v):
    """``E[exp(alpha x + beta); lo <= x < hi]`` for ``x ~ N(0, v)``."""
    sd = np.sqrt(v)
    shift = alpha * v
    log_hi = log_ndtr((hi - shift) / sd)
    log_lo = log_ndtr((lo - shift) / sd)
    return np.exp(beta + 0.5 * alpha * alpha * v + log_hi) * -np.expm1(log_lo - log_hi)


def _inner_exact(a: float, lam: np.ndarray, s: np.ndarray) -> np.ndarray:
    v = s * (1.0 - s)
    b1, c1 = a + lam * s, 2.0 * a / s
    b2, c2 = a - lam * (1.0 - s), 2.0 * a / (1.0 - s)
    inf = np.inf
    p1 = _segment(c1, -c1 * b1, -inf, b1, v) + _segment(0.0, 0.0, b1, inf, v)
    p2 = _segment(c2, -c2 * b2, -inf, b2, v) + _segment(0.0, 0.0, b2, inf, v)
    lo, hi = np.minimum(b1, b2), np.maximum(b1, b2)
    both = _segment(c1 + c2, -c1 * b1 - c2 * b2, -inf, lo, v)
    both = both + np.where(b1 > b2, _segment(c1, -c1 * b1, lo, hi, v), _segment(c2, -c2 * b2, lo, hi, v))
    both = both + _segment(0.0, 0.0, hi, inf, v)
    return p1 + p2 - both


def _inner_hermite(a: float, lam: np.ndarray, s: np.ndarray, n_x: int) -> np.ndarray:
    z, wz = hermegauss(n_x)
    wz = wz / wz.sum()
    x = np.sqrt(s * (1.0 - s))[..., None] * z
    lam, s = lam[..., None], s[..., None]
    f1 = np.exp(np.minimum(0.0, -2.0 * a * (a + lam * s - x) / s))
    f2 = np.exp(np.minimum(0.0, -2.0 * a * (a - lam * (1.0 - s) - x) / (1.0 - s)))
    return (1.0 - (1.0 - f1) * (1.0 - f2)) @ wz


def ks_limit_fn(m: KsModel, lam):
    """``h_inf(lam)`` by Gauss-Legendre in ``s``; vectorised over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam) > 1.0):
        raise ContractError("ks_limit_fn is only evaluated for |lambda| <= 1")
    nodes, weights = leggauss(m.n_s)
    s = 0.5 * (nodes + 1.0)
    grid = lam[..., None] * np.ones_like(s)
    if m.inner == "exact":
        inner = _inner_exact(m.a, grid, s * np.ones_like(grid))
    else:
        inner = _inner_hermite(m.a, grid, s * np.ones_like(grid), m.n_x)
    out = 0.5 * (inner @ weights)
    return float(out) if out.ndim == 0 else out


def inner_expectation(m: KsModel, lam: float, s) -> np.ndarray:
    """The ``x``-expectation at fixed ``s`` (constant ``exp(-2a^2)`` at lam=0)."""
    s = np.asarray(s, dtype=float)
    lam_arr = np.full_like(s, float(lam))
    if m.inner == "exact":
        return _inner_exact(m.a, lam_arr, s)
    return _inner_hermite(m.a, lam_arr, s, m.n_x)


def _evaluator(m: KsModel):
    def evaluate(points: np.ndarray) -> np.ndarray:
        if points.shape[1] != 1:
            raise ContractError("the KS limit function is available for a single slot only")
        return np.asarray(ks_limit_fn(m, points[:, 0]), dtype=float)

    return evaluate


def ks_derivative_check(m: KsModel, order: int = 3) -> float:
    """Right-sided ``d^order/dlam^order h_inf`` at 0 by finite differences.

    For ``order = 3`` this should equal ``-4a exp(-2a^2)``.
    """
    value, _ = fd_derivative(_evaluator(m), (order,), m.fd)
    return float(value.real)


class KsProvider(DerivativeProvider):
    accuracy = "quadrature+FD"

    def __init__(self, model: KsModel):
        self.model = model

    def derivative(self, orders: DMonomial) -> complex:
        if not orders:
            return complex(ks_limit_fn(self.model, 0.0))
        if len(orders) > 1:
            raise ContractError(
                f"orders {list(orders)} need a multi-slot KS limit function, which is not available (use s <= 4)"
            )
        return complex(ks_derivative_check(self.model, orders[0]))


def ks_expansion(m: KsModel, w: WeightVector) -> float:
    """``exp(-2a^2) + (eps^3/6) d/da exp(-2a^2)``."""
    _require_unit(w)
    return m.leading + w.power_sum(3) / 6.0 * (-4.0 * m.a * m.leading)


def sup_statistic(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Exact ``sup_t D+(t)`` for each row of uniforms ``x`` (shape ``(B, n)``).

    Between order statistics ``D+`` is linear in ``t``, so the supremum is
    attained at a breakpoint (value after the jump) or approached just
    before the next one.
    """
    order = np.argsort(x, axis=1, kind="stable")
    xs = np.take_along_axis(x, order, axis=1)
    eps = weights[order]
    total = weights.sum()
    b = x.shape[0]
    cum = np.concatenate([np.zeros((b, 1)), np.cumsum(eps, axis=1)], axis=1)
    left = np.concatenate([np.zeros((b, 1)), xs], axis=1)
    right = np.concatenate([xs, np.ones((b, 1))], axis=1)
    seg_max = np.maximum(cum - left * total, cum - right * total)
    return seg_max.max(axis=1)


def _block_count(m: KsModel, weights: np.ndarray, block: int, size: int) -> int:
    rng = stream(m.seed, block, DOMAIN_KS)
    x = rng.random((size, len(weights)))
    return int(np.count_nonzero(sup_statistic(x, weights) > m.a))


def mc_ks_exceedance(m: KsModel, w: WeightVector, threads: int = 1) -> tuple[float, float]:
    """Monte Carlo ``P(sup_t D+ > a)`` with its binomial standard error.

    Replicates come in fixed blocks of :data:`BLOCK`, each with its own
    counter-based stream, so the estimate is independent of ``threads``.
    """
    if m.reps < MIN_REPS:
        raise ValueError(f"the KS Monte Carlo oracle needs at least {MIN_REPS} replicates")
    weights = w.as_array()
    sizes = [min(BLOCK, m.reps - start) for start in range(0, m.reps, BLOCK)]
    jobs = list(enumerate(sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(lambda job: _block_count(m, weights, *job), jobs))
    else:
        counts = [_block_count(m, weights, *job) for job in jobs]
    p = sum(counts) / m.reps
    return p, math.sqrt(p * (1.0 - p) / m.reps)


def normal_tail(z: float) -> float:
    return float(ndtr(-z))
