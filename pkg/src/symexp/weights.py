"""Weight vectors, their power sums and the grading of power-sum monomials.

A :class:`WeightVector` holds the weights ``eps_1..eps_n`` of a symmetric
function scheme.  The expansion is written in the power sums
``eps^d = sum_j eps_j**d``; sums are computed with :func:`math.fsum`, which is
correctly rounded and therefore bit-identical under any permutation of the
entries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .rng import DOMAIN_SPHERE, stream

__all__ = [
    "WeightVector",
    "SphereSample",
    "power_sum",
    "abs_power_sum",
    "normalize_to_sphere",
    "grading_degree",
    "sample_uniform_sphere",
    "sphere_vector",
    "klartag_sodin_stats",
    "equal_weights",
    "parse_weights",
    "UNIT_TOL",
]

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class WeightVector:
    """Immutable weight vector with memoised power sums."""

    entries: tuple[float, ...]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __init__(self, entries: Iterable[float]):
        values = tuple(float(x) for x in entries)
        if not values:
            raise ValueError("weight vector must have at least one entry")
        if not all(math.isfinite(x) for x in values):
            raise ValueError("weight entries must be finite")
        object.__setattr__(self, "entries", values)
        object.__setattr__(self, "_cache", {})

    @property
    def n(self) -> int:
        return len(self.entries)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    def power_sum(self, d: int) -> float:
        """``eps^d``, the d-th power sum."""
        _check_degree(d)
        key = ("p", d)
        if key not in self._cache:
            self._cache[key] = math.fsum(x**d for x in self.entries)
        return self._cache[key]

    def abs_power_sum(self, d: int) -> float:
        """``|eps|^d = sum_j |eps_j|**d``."""
        _check_degree(d)
        key = ("a", d)
        if key not in self._cache:
            self._cache[key] = math.fsum(abs(x) ** d for x in self.entries)
        return self._cache[key]

    def norm(self, d: int) -> float:
        """``|eps|_d``, the d-th root of the absolute power sum."""
        return self.abs_power_sum(d) ** (1.0 / d)

    def signed_root(self, d: int) -> float:
        """``(eps)_d``, the real d-th root of ``eps^d`` (sign kept for odd d)."""
        value = self.power_sum(d)
        return math.copysign(abs(value) ** (1.0 / d), value)

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return abs(self.power_sum(2) - 1.0) <= tol

    def to_json(self) -> str:
        return json.dumps(list(self.entries))

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class SphereSample:
    vector: WeightVector
    seed: int
    index: int


def _check_degree(d: int) -> None:
    if int(d) != d or d < 1:
        raise ValueError(f"power-sum degree must be a positive integer, got {d!r}")


def power_sum(w: WeightVector, d: int) -> float:
    return w.power_sum(d)


def abs_power_sum(w: WeightVector, d: int) -> float:
    return w.abs_power_sum(d)


def normalize_to_sphere(w: WeightVector) -> WeightVector:
    """Rescale ``w`` to unit Euclidean norm, keeping its direction."""
    norm2 = w.abs_power_sum(2)
    if norm2 == 0.0:
        raise ValueError("zero weight vector")
    scale = math.sqrt(norm2)
    return WeightVector(x / scale for x in w.entries)


def grading_degree(monomial: Mapping[int, int]) -> int:
    """Degree of ``prod_d (eps^d)**p_d`` under ``Deg(eps^d) = d - 2``.

    ``d = 2`` is accepted with weight zero (on the sphere ``eps^2 = 1``).
    """
    total = 0
    for d, p in monomial.items():
        if d < 2:
            raise ValueError(f"power sum eps^{d} has no grading (need d >= 2)")
        if p < 0:
            raise ValueError("exponents must be non-negative")
        total += p * (d - 2)
    return total


def equal_weights(n: int) -> WeightVector:
    if n < 1:
        raise ValueError("n must be positive")
    return WeightVector([1.0 / math.sqrt(n)] * n)


def sphere_vector(n: int, seed: int, index: int) -> WeightVector:
    """Uniform point on S^{n-1} for stream ``(seed, index)``."""
    if n < 2:
        raise ValueError("sphere sampling needs n >= 2")
    g = stream(seed, index, DOMAIN_SPHERE).standard_normal(n)
    norm = math.sqrt(math.fsum(g * g))
    return WeightVector(g / norm)


def sample_uniform_sphere(n: int, seed: int, count: int, start: int = 0) -> list[SphereSample]:
    """``count`` independent uniform samples on S^{n-1}.

    Sample ``i`` depends only on ``(seed, start + i)``, so index ranges can be
    generated independently and concatenated.
    """
    if n < 2:
        raise ValueError("sphere sampling needs n >= 2")
    if count < 1:
        raise ValueError("count must be >= 1")
    return [
        SphereSample(sphere_vector(n, seed, i), seed, i)
        for i in range(start, start + count)
    ]


def klartag_sodin_stats(w: WeightVector, tol: float = UNIT_TOL) -> tuple[float, float]:
    """Return ``(|sum eps_k^3|, sum eps_k^4)`` for a unit vector."""
    if not w.is_unit(tol):
        raise ValueError(f"expected a unit vector, |eps|_2^2 = {w.power_sum(2)!r}")
    return abs(w.power_sum(3)), w.power_sum(4)


def parse_weights(text: str) -> WeightVector:
    """Parse ``equal:n``, ``file:<path>`` or ``sphere:n:seed:index``."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "equal":
            return equal_weights(int(rest))
        if kind == "sphere":
            n, seed, index = (int(x) for x in rest.split(":"))
            return sphere_vector(n, seed, index)
    except ValueError as exc:
        raise ValueError(f"malformed weight spec {text!r}: {exc}") from exc
    if kind == "file":
        data = json.loads(Path(rest).read_text(encoding="utf-8"))
        if not isinstance(data, list) or not all(isinstance(x, (int, float)) for x in data):
            raise ValueError(f"{rest}: expected a JSON array of numbers")
        return WeightVector(data)
    raise ValueError(f"unknown weight spec {text!r} (use equal:n, file:<path>, sphere:n:seed:index)")

