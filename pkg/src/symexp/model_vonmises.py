"""Quadratic von Mises statistics over a finite sample space.

``w_n = sum_j eps_j g(X_j) + sum_{j,k} eps_j eps_k h(X_j, X_k)`` (diagonal
included) with a degenerate kernel ``h(x, y) = sum_k q_k e_k(x) e_k(y)`` given
by finitely many mean-zero orthonormal eigenfunctions.  Every expectation is
a finite sum over the support, so the limit function and the small-``n``
oracle are exact up to floating point.

Completing the square in each Gaussian direction ``Y_k`` gives

    h_inf(l) = phi(t) E exp(it sum_{a,b} h_t(X_a, X_b) l_a l_b + it sum_a l_a g_t(X_a))

with ``h_t = h + 2it sum_k q_k^2 e_k e_k / (1 - 2itq_k)`` and
``g_t = g + 2it E[h_t(., X) g(X)]``.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import ExpansionResult, FDProvider, _require_unit, expand
from .errors import BudgetError, ContractError
from .fd import FDConfig
from .weights import WeightVector

__all__ = [
    "SpectralKernel",
    "VonMisesModel",
    "canonical_kernel",
    "load_kernel",
    "transformed_kernels",
    "phi_factor",
    "limit_evaluator",
    "vonmises_provider",
    "vonmises_expand",
    "exact_small_n_charfn",
    "canonical_binomial_charfn",
    "PROVIDER_BUDGET",
    "EXACT_BUDGET",
]

PROVIDER_BUDGET = 10**6
EXACT_BUDGET = 10**7
_PROB_TOL = 1e-12
_ORTHO_TOL = 1e-10
_CHUNK = 1 << 16


@dataclass(frozen=True)
class SpectralKernel:
    """Finite support with probabilities ``mu`` and a rank-``K`` kernel.

    ``e`` has shape ``(K, d)``: row ``k`` tabulates ``e_k`` on the support.
    """

    support: tuple[float, ...]
    mu: np.ndarray
    q: np.ndarray
    e: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        q = np.asarray(self.q, dtype=float).reshape(-1)
        e = np.asarray(self.e, dtype=float).reshape(len(q), -1)
        d = len(self.support)
        g = np.zeros(d) if self.g is None else np.asarray(self.g, dtype=float)
        if mu.shape != (d,) or e.shape[1] != d or g.shape != (d,):
            raise ContractError("support, mu, eigenfunction and g tables must all have the support's length")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > _PROB_TOL:
            raise ContractError("mu must be a probability vector")
        if np.any(np.diff(np.abs(q)) > 0):
            raise ContractError("eigenvalues must be sorted by decreasing absolute value")
        if np.any(np.abs(e @ mu) > _ORTHO_TOL):
            raise ContractError("eigenfunctions must have mean zero")
        if np.any(np.abs((e * mu) @ e.T - np.eye(len(q))) > _ORTHO_TOL):
            raise ContractError("eigenfunctions must be orthonormal in L2(mu)")
        if abs(g @ mu) > _ORTHO_TOL:
            raise ContractError("g must have mean zero")
        for name, value in (("mu", mu), ("q", q), ("e", e), ("g", g)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def d(self) -> int:
        return len(self.support)

    @property
    def rank(self) -> int:
        return len(self.q)

    def h(self) -> np.ndarray:
        """``h(x_i, x_j) = sum_k q_k e_k(x_i) e_k(x_j)`` as a ``(d, d)`` table."""
        return (self.e.T * self.q) @ self.e

    def g_coefficients(self) -> tuple[np.ndarray, float]:
        """``g_k = E g e_k`` and the squared norm of the residual of ``g``."""
        gk = self.e @ (self.g * self.mu)
        residual = float(self.g**2 @ self.mu - gk @ gk)
        return gk, max(residual, 0.0)

    def trace(self) -> float:
        """``E h(X, X)``."""
        return float(np.diag(self.h()) @ self.mu)

    def to_json(self) -> dict:
        return {
            "support": list(self.support),
            "mu": self.mu.tolist(),
            "eigs": [{"q": float(qk), "e": ek.tolist()} for qk, ek in zip(self.q, self.e)],
            "g": self.g.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SpectralKernel":
        try:
            eigs = sorted(data["eigs"], key=lambda item: -abs(float(item["q"])))
            support = tuple(float(x) for x in data["support"])
            return cls(
                support=support,
                mu=np.array(data["mu"], dtype=float),
                q=np.array([item["q"] for item in eigs], dtype=float),
                e=np.array([item["e"] for item in eigs], dtype=float).reshape(len(eigs), len(support)),
                g=np.array(data.get("g", [0.0] * len(support)), dtype=float),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed kernel JSON: {exc}") from exc


def canonical_kernel(q: float = 0.4) -> SpectralKernel:
    """Support ``{+1, -1}``, fair coin, ``e(x) = x``, eigenvalue ``q``, ``g = 0``."""
    return SpectralKernel((1.0, -1.0), np.array([0.5, 0.5]), np.array([q]), np.array([[1.0, -1.0]]), np.zeros(2))


def load_kernel(spec: str) -> SpectralKernel:
    """``canonical``, ``canonical:q`` or ``file:path`` to a kernel JSON."""
    kind, _, rest = spec.partition(":")
    if kind == "canonical":
        return canonical_kernel(float(rest) if rest else 0.4)
    if kind == "file":
        return SpectralKernel.from_json(json.loads(Path(rest).read_text(encoding="utf-8")))
    raise ValueError(f"unknown kernel spec {spec!r} (use canonical[:q] or file:<path>)")


@dataclass(frozen=True)
class VonMisesModel:
    kernel: SpectralKernel
    t: float


def _resolvents(m: VonMisesModel) -> np.ndarray:
    denom = 1.0 - 2j * m.t * m.kernel.q
    if np.any(np.abs(denom) == 0.0):
        raise ContractError("1 - 2itq_k vanishes for some eigenvalue")
    return denom


def transformed_kernels(m: VonMisesModel) -> tuple[np.ndarray, np.ndarray]:
    """Complex tables ``h_t`` of shape ``(d, d)`` and ``g_t`` of shape ``(d,)``."""
    k = m.kernel
    denom = _resolvents(m)
    ht = k.h() + 2j * m.t * (k.e.T * (k.q**2 / denom)) @ k.e
    gt = k.g + 2j * m.t * (ht @ (k.g * k.mu))
    return ht, gt


def phi_factor(m: VonMisesModel) -> complex:
    """Gaussian-chaos factor ``phi(t)``; principal branch in each root."""
    k = m.kernel
    denom = _resolvents(m)
    gk, g0_sq = k.g_coefficients()
    t = m.t
    value = complex(1.0)
    for qk, dk in zip(k.q, denom):
        value *= cmath.exp(-1j * t * qk) / cmath.sqrt(dk)
    exponent = 1j * t * k.trace() - 0.5 * t * t * (complex(np.sum(gk**2 / denom)) + g0_sq)
    return value * cmath.exp(exponent)


def limit_evaluator(m: VonMisesModel):
    """Vectorised ``F(l) = h_inf(l) / phi(t)`` by enumeration of ``support^m``."""
    ht, gt = transformed_kernels(m)
    d = m.kernel.d
    mu = m.kernel.mu
    t = m.t
    cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def tables(slots: int):
        if slots not in cache:
            configs = np.array(np.unravel_index(np.arange(d**slots), (d,) * slots)).T.reshape(-1, slots)
            prob = np.prod(mu[configs], axis=1)
            pairs = np.stack([ht[configs[:, a], configs[:, b]] for a in range(slots) for b in range(slots)])
            lin = np.stack([gt[configs[:, a]] for a in range(slots)]) if slots else np.zeros((0, 1))
            cache[slots] = (prob, pairs, lin)
        return cache[slots]

    def evaluate(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        slots = points.shape[1]
        if d**slots > PROVIDER_BUDGET:
            raise BudgetError(
                f"enumerating {d}^{slots} support configurations exceeds {PROVIDER_BUDGET}; use a smaller support or lower s"
            )
        if slots == 0:
            return np.ones(len(points), dtype=complex)
        prob, pairs, lin = tables(slots)
        quad = np.einsum("na,nb->nab", points, points).reshape(len(points), -1)
        out = np.empty(len(points), dtype=complex)
        step = max(1, _CHUNK * 16 // len(prob))
        for start in range(0, len(points), step):
            sl = slice(start, start + step)
            exponent = 1j * t * (quad[sl] @ pairs + points[sl] @ lin)
            out[sl] = np.exp(exponent) @ prob
        return out

    return evaluate


def vonmises_provider(m: VonMisesModel, config: FDConfig | None = None) -> FDProvider:
    return FDProvider(limit_evaluator(m), config, accuracy="quadrature+FD")


def vonmises_expand(m: VonMisesModel, w: WeightVector, s: int, config: FDConfig | None = None, **kwargs) -> ExpansionResult:
    """``phi(t) * sum_{r <= s-3} a_r`` with the parts scaled by ``phi``.

    The returned result's ``leading`` is ``phi(t) F(0) = phi(t)`` and every
    term ``a_r`` is multiplied by ``phi(t)``, so ``total()`` is the expansion.
    """
    _require_unit(w)
    base = expand(vonmises_provider(m, config), w, s, **kwargs)
    phi = phi_factor(m)
    base.leading *= phi
    base.terms = [(l, phi * v) for l, v in base.terms]
    for rows in base.diagnostics.values():
        for row in rows:
            row["contribution"] *= phi
    base.diagnostics["phi"] = [{"re": phi.real, "im": phi.imag}]
    return base


def exact_small_n_charfn(m: VonMisesModel, w: WeightVector) -> complex:
    """``E exp(it w_n)`` by enumerating all ``d^n`` outcomes in index order."""
    k = m.kernel
    d, n = k.d, w.n
    if d**n > EXACT_BUDGET:
        raise BudgetError(f"enumerating {d}^{n} outcomes exceeds {EXACT_BUDGET}")
    eps = w.as_array()
    total = 0j
    for start in range(0, d**n, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, d**n))
        digits = np.array(np.unravel_index(idx, (d,) * n)).T.reshape(len(idx), n)
        prob = np.prod(k.mu[digits], axis=1)
        linear = k.g[digits] @ eps
        proj = np.einsum("ckn,n->ck", k.e[:, digits].transpose(1, 0, 2), eps)
        stat = linear + (proj**2) @ k.q
        total += complex(np.exp(1j * m.t * stat) @ prob)
    return total


def canonical_binomial_charfn(q: float, t: float, n: int) -> complex:
    """``E exp(itq S^2)`` for ``S`` a normalised sum of ``n`` signs (equal weights)."""
    k = np.arange(n + 1)
    log_pmf = np.array([math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1) for j in k]) - n * math.log(2)
    s = (2 * k - n) / math.sqrt(n)
    return complex(np.exp(log_pmf + 1j * t * q * s * s).sum())
