"""Tensor-product finite differences for mixed partial derivatives at zero.

Limit functions are supplied as vectorised evaluators ``f(points) -> values``
where ``points`` has shape ``(N, m)``, one column per slot variable.  The
derivative ``d^{a_1}/dl_1^{a_1} ... d^{a_m}/dl_m^{a_m} f(0)`` is the tensor
product of one-dimensional stencils, evaluated at steps ``h`` and ``h/2`` and
combined by one Richardson step.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError

__all__ = ["FDConfig", "FDError", "fd_derivative", "stencil", "Evaluator", "MAX_SLOT_ORDER", "MAX_SLOTS"]

Evaluator = Callable[[np.ndarray], np.ndarray]

MAX_SLOT_ORDER = 6
# a few ulps per node value (evaluators are themselves rounded)
_EPS = 8 * 2.0**-52
MAX_SLOTS = 4


class FDError(ContractError):
    """Raised when an evaluator returns a non-finite value on a stencil node."""


@dataclass(frozen=True)
class FDConfig:
    """Step, base accuracy order and stencil side for :func:`fd_derivative`.

    ``accuracy`` is the truncation order of the base stencil; the Richardson
    step over ``{h, h/2}`` adds at least one more order.  ``one_sided`` uses
    forward stencils on ``[0, inf)`` for functions that are only smooth from
    the right at zero.
    """

    step: float = 0.2
    accuracy: int = 8
    one_sided: bool = False
    richardson: bool = True
    max_points: int = 200_000

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("FD step must be positive")
        if self.accuracy < 1:
            raise ValueError("FD accuracy order must be >= 1")
        if not self.one_sided and self.accuracy % 2:
            raise ValueError("central stencils need an even accuracy order")


@lru_cache(maxsize=None)
def stencil(order: int, accuracy: int, one_sided: bool = False) -> tuple[tuple[int, ...], tuple[Fraction, ...]]:
    """Integer offsets and exact weights for the ``order``-th derivative."""
    if order == 0:
        return (0,), (Fraction(1),)
    if one_sided:
        offsets = tuple(range(order + accuracy))
    else:
        half = (order + 1) // 2 - 1 + accuracy // 2
        offsets = tuple(range(-half, half + 1))
    size = len(offsets)
    # solve sum_k w_k * x_k**j = order! * [j == order] exactly
    rows = [
        [Fraction(x) ** j for x in offsets] + [Fraction(math.factorial(order)) if j == order else Fraction(0)]
        for j in range(size)
    ]
    for col in range(size):
        pivot = next(r for r in range(col, size) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        lead = rows[col][col]
        rows[col] = [v / lead for v in rows[col]]
        for r in range(size):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]
    return offsets, tuple(row[-1] for row in rows)


def _tensor_nodes(orders: Sequence[int], cfg: FDConfig) -> tuple[np.ndarray, np.ndarray]:
    stencils = [stencil(a, cfg.accuracy, cfg.one_sided) for a in orders]
    offsets = [np.array(s[0], dtype=float) for s in stencils]
    weights = [np.array([float(w) for w in s[1]]) for s in stencils]
    grid = np.array(list(itertools.product(*offsets)), dtype=float).reshape(-1, len(orders))
    wgrid = np.ones(len(grid))
    for k, idx in enumerate(itertools.product(*[range(len(o)) for o in offsets])):
        wgrid[k] = math.prod(weights[slot][i] for slot, i in enumerate(idx))
    keep = wgrid != 0.0
    return grid[keep], wgrid[keep]


def _apply(f: Evaluator, nodes: np.ndarray, weights: np.ndarray, h: float, total: int) -> tuple[complex, float]:
    """Weighted stencil sum and a bound on its rounding error."""
    points = nodes * h
    values = np.asarray(f(points))
    if values.shape != (len(points),):
        raise ValueError(f"evaluator returned shape {values.shape}, expected ({len(points)},)")
    bad = ~np.isfinite(values)
    if bad.any():
        where = points[np.argmax(bad)]
        raise FDError(f"non-finite limit-function value at node {tuple(float(x) for x in where)}")
    # sum in a fixed order so results do not depend on evaluation scheduling
    scale = h**total
    rounding = _EPS * float(np.dot(np.abs(weights), np.abs(values))) / scale
    return complex(np.dot(weights, values)) / scale, rounding


def fd_derivative(f: Evaluator, orders: Sequence[int], config: FDConfig | None = None) -> tuple[complex, float]:
    """Mixed partial derivative of ``f`` at the origin.

    Returns ``(value, error_estimate)``.  The estimate adds the gap between
    the two Richardson levels (truncation) to a bound on the rounding error
    amplified by ``h**-sum(orders)``.
    """
    cfg = config or FDConfig()
    orders = tuple(int(a) for a in orders)
    if len(orders) > MAX_SLOTS:
        raise ValueError(f"at most {MAX_SLOTS} slots supported, got {len(orders)}")
    if any(a < 0 or a > MAX_SLOT_ORDER for a in orders):
        raise ValueError(f"slot orders must lie in [0, {MAX_SLOT_ORDER}], got {orders}")
    if not orders or not any(orders):
        return _apply(f, np.zeros((1, len(orders))), np.ones(1), 1.0, 0)[0], 0.0
    nodes, weights = _tensor_nodes(orders, cfg)
    if len(nodes) > cfg.max_points:
        raise ValueError(f"stencil needs {len(nodes)} evaluations, above max_points={cfg.max_points}")
    total = sum(orders)
    coarse, coarse_rounding = _apply(f, nodes, weights, cfg.step, total)
    if not cfg.richardson:
        return coarse, coarse_rounding
    fine, fine_rounding = _apply(f, nodes, weights, cfg.step / 2, total)
    gain = 2.0**cfg.accuracy
    value = (gain * fine - coarse) / (gain - 1.0)
    rounding = (gain * fine_rounding + coarse_rounding) / (gain - 1.0)
    return value, abs(value - fine) + rounding
