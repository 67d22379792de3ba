"""Assembly of the Edgeworth-type expansion of ``h_n`` on the unit sphere.

``expand`` substitutes the power sums ``eps^j`` for ``tau_j`` in the Edgeworth
polynomials ``P_1..P_{s-3}`` and contracts each resulting D-monomial against a
:class:`DerivativeProvider`, i.e. against a mixed derivative of the limit
function ``h_inf(l_1, ..., l_m)`` at zero.  One slot variable is bound to each
factor of a D-monomial.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ContractError, ProviderError
from .fd import Evaluator, FDConfig, fd_derivative
from .opalgebra import MAX_ORDER, DMonomial, dmono, edgeworth_polynomial, substitute_tau
from .weights import UNIT_TOL, WeightVector

__all__ = [
    "DerivativeProvider",
    "FDProvider",
    "ExpansionResult",
    "expand",
    "remainder_scale",
    "berry_esseen_scale",
    "ACCURACY_CLASSES",
]

ACCURACY_CLASSES = ("exact-analytic", "quadrature+FD", "monte-carlo+FD")


class DerivativeProvider(ABC):
    """Mixed derivatives of a limit function at the origin.

    ``provider(orders)`` returns ``d^{a_1}_{l_1} ... d^{a_m}_{l_m} h_inf(0)``
    for the multiset ``orders``; the empty multiset gives ``h_inf`` itself.
    Implementations must be reentrant.
    """

    accuracy: str = "exact-analytic"

    @abstractmethod
    def derivative(self, orders: DMonomial) -> complex:
        ...

    def __call__(self, orders: Sequence[int] = ()) -> complex:
        return self.derivative(dmono(*orders))


class FDProvider(DerivativeProvider):
    """Provider backed by finite differences of a vectorised evaluator."""

    def __init__(self, evaluator: Evaluator, config: FDConfig | None = None, accuracy: str = "quadrature+FD"):
        if accuracy not in ACCURACY_CLASSES:
            raise ValueError(f"unknown accuracy class {accuracy!r}")
        self.evaluator = evaluator
        self.config = config or FDConfig()
        self.accuracy = accuracy
        self.error_estimates: dict[DMonomial, float] = {}

    def derivative(self, orders: DMonomial) -> complex:
        value, err = fd_derivative(self.evaluator, orders, self.config)
        self.error_estimates[orders] = err
        return value


@dataclass
class ExpansionResult:
    leading: complex
    terms: list[tuple[int, complex]]
    remainder_scale: float
    s: int
    diagnostics: dict[int, list[dict]] = field(default_factory=dict)

    def total(self, s: int | None = None) -> complex:
        """``h_inf + sum_{l <= s-3} term_l``; defaults to the full order."""
        s = self.s if s is None else s
        if s > self.s:
            raise ValueError(f"expansion only computed through s={self.s}")
        return self.leading + sum((v for l, v in self.terms if l <= s - 3), 0j)

    def to_json(self) -> dict:
        total = self.total()
        return {
            "s": self.s,
            "leading": {"re": self.leading.real, "im": self.leading.imag},
            "terms": [{"order": l, "re": v.real, "im": v.imag} for l, v in self.terms],
            "remainder_scale": self.remainder_scale,
            "total": {"re": total.real, "im": total.imag},
        }


def _require_unit(w: WeightVector) -> None:
    if abs(w.power_sum(2) - 1.0) > UNIT_TOL:
        raise ContractError(
            f"expansion requires weights on the unit sphere, got |eps|_2^2 = {w.power_sum(2)!r}"
        )


def _evaluate(provider: DerivativeProvider, orders: DMonomial) -> complex:
    try:
        return complex(provider.derivative(orders))
    except ProviderError:
        raise
    except Exception as exc:  # attach the multiset to whatever went wrong
        raise ProviderError(orders, exc) from exc


def expand(
    provider: DerivativeProvider,
    w: WeightVector,
    s: int,
    max_order: int = MAX_ORDER,
    threads: int = 1,
) -> ExpansionResult:
    """Expansion of ``h_n(w)`` with remainder of order ``|eps|^s``.

    ``s = 3`` gives the leading term alone; each further unit adds one term.
    """
    _require_unit(w)
    if not (3 <= s <= max_order + 3):
        raise ValueError(f"s={s} out of range [3, {max_order + 3}]")
    orders_needed = list(range(1, s - 2))
    substituted: dict[int, dict[DMonomial, float]] = {}
    for l in orders_needed:
        poly = edgeworth_polynomial(l, max_order=max_order)
        substituted[l] = substitute_tau(poly, {j: w.power_sum(j) for j in poly.tau_labels()})

    monomials = sorted({d for coeffs in substituted.values() for d in coeffs} | {()}, key=lambda d: (len(d), d))
    if threads > 1 and len(monomials) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda d: _evaluate(provider, d), monomials))
    else:
        values = [_evaluate(provider, d) for d in monomials]
    derivs = dict(zip(monomials, values))

    terms: list[tuple[int, complex]] = []
    diagnostics: dict[int, list[dict]] = {}
    for l in orders_needed:
        total = 0j
        rows = []
        for d, coeff in substituted[l].items():
            contribution = coeff * derivs[d]
            total += contribution
            rows.append({"d_orders": list(d), "coeff": coeff, "derivative": derivs[d], "contribution": contribution})
        terms.append((l, total))
        diagnostics[l] = rows
    return ExpansionResult(
        leading=derivs[()],
        terms=terms,
        remainder_scale=remainder_scale(w, s),
        s=s,
        diagnostics=diagnostics,
    )


def remainder_scale(w: WeightVector, s: int) -> float:
    """``|eps|^s = sum_j |eps_j|^s``, the scale of the order-``s`` remainder.

    Only the scale is returned; the constants multiplying it are not known.
    """
    if s < 3:
        raise ValueError("remainder scale is defined for s >= 3")
    return w.abs_power_sum(s)


def berry_esseen_scale(w: WeightVector) -> float:
    """``max(1, |eps|_2^3) * sum_j |eps_j|^3``."""
    return max(1.0, w.abs_power_sum(2) ** 1.5) * w.abs_power_sum(3)
