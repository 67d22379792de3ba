"""Exact formal algebra of derivative symbols.

A term is ``coefficient * prod_j tau_j**p_j * D^{a_1} ... D^{a_m}`` where the
D-part is a commutative multiset of derivative orders.  ``D^{a_1}...D^{a_m}``
stands for the mixed derivative of the limit function in ``m`` distinct slot
variables at zero.  Coefficients are :class:`fractions.Fraction`; floats only
appear when numbers are substituted for the ``tau`` symbols.

All generating series (cumulant operators, Edgeworth polynomials, the
auxiliary ``tilde`` polynomials) are produced by truncated power-series
composition, so the maximal order is a parameter rather than a table size.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from numbers import Number, Rational
from types import MappingProxyType
from typing import Iterable, Mapping, Union

from .weights import WeightVector

__all__ = [
    "DMonomial",
    "TauMonomial",
    "OperatorPolynomial",
    "MAX_ORDER",
    "PRIME_SHIFT",
    "dmono",
    "tau_weight",
    "cumulant_operator",
    "edgeworth_polynomial",
    "tilde_polynomial",
    "bracket",
    "substitute_tau",
    "verify_convolution_identity",
    "verify_bracket_statement",
    "verify_telescoping",
    "verify_power_collapse",
    "moment_series_roundtrip",
]

MAX_ORDER = 12
# tau labels >= PRIME_SHIFT denote a second, independent family tau'_j.
PRIME_SHIFT = 100

DMonomial = tuple[int, ...]
TauMonomial = tuple[tuple[int, int], ...]
Key = tuple[TauMonomial, DMonomial]
Scalar = Union[int, Fraction]


def dmono(*orders: int) -> DMonomial:
    if any(a < 0 for a in orders):
        raise ValueError("derivative orders must be non-negative")
    return tuple(sorted(orders))


def tau_weight(tau: TauMonomial) -> int:
    """``sum_j j * p_j`` (labels of the primed family count by their index)."""
    return sum((j % PRIME_SHIFT) * p for j, p in tau)


def _tau_mul(a: TauMonomial, b: TauMonomial) -> TauMonomial:
    if not a:
        return b
    if not b:
        return a
    merged = dict(a)
    for j, p in b:
        merged[j] = merged.get(j, 0) + p
    return tuple(sorted(merged.items()))


def _d_mul(a: DMonomial, b: DMonomial) -> DMonomial:
    if not a:
        return b
    if not b:
        return a
    return tuple(sorted(a + b))


def _sort_key(key: Key):
    tau, d = key
    return (tau_weight(tau), tau, len(d), d)


class OperatorPolynomial:
    """Finite linear combination of ``tau``-monomial x D-monomial terms.

    Instances are immutable and hashable; arithmetic returns new objects and
    never stores zero coefficients.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Key, Scalar] | Iterable[tuple[Key, Scalar]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Key, Fraction] = {}
        for (tau, d), c in items:
            c = Fraction(c)
            if c == 0:
                continue
            key = (tuple(sorted((int(j), int(p)) for j, p in tau if p)), tuple(sorted(d)))
            acc[key] = acc.get(key, Fraction(0)) + c
        self._terms = MappingProxyType({k: v for k, v in acc.items() if v != 0})
        self._hash = None

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: Scalar) -> "OperatorPolynomial":
        return cls({((), ()): c})

    @classmethod
    def d(cls, *orders: int, coeff: Scalar = 1) -> "OperatorPolynomial":
        return cls({((), dmono(*orders)): coeff})

    @classmethod
    def tau(cls, j: int, power: int = 1, coeff: Scalar = 1) -> "OperatorPolynomial":
        return cls({(((j, power),), ()): coeff})

    @classmethod
    def _raw(cls, terms: dict[Key, Fraction]) -> "OperatorPolynomial":
        obj = cls.__new__(cls)
        obj._terms = MappingProxyType(terms)
        obj._hash = None
        return obj

    # inspection ---------------------------------------------------------
    @property
    def terms(self) -> Mapping[Key, Fraction]:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def sorted_terms(self) -> list[tuple[TauMonomial, DMonomial, Fraction]]:
        return [(t, d, self._terms[(t, d)]) for t, d in sorted(self._terms, key=_sort_key)]

    def d_monomials(self) -> list[DMonomial]:
        return sorted({d for _, d in self._terms}, key=lambda d: (len(d), d))

    def tau_labels(self) -> set[int]:
        return {j for tau, _ in self._terms for j, _ in tau}

    def coefficient(self, tau: TauMonomial = (), d: DMonomial = ()) -> Fraction:
        return self._terms.get((tuple(sorted(tau)), tuple(sorted(d))), Fraction(0))

    # arithmetic ---------------------------------------------------------
    @staticmethod
    def _coerce(other) -> "OperatorPolynomial":
        if isinstance(other, OperatorPolynomial):
            return other
        if isinstance(other, Rational):
            return OperatorPolynomial.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for k, v in other._terms.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return OperatorPolynomial._raw(out)

    __radd__ = __add__

    def __neg__(self):
        return OperatorPolynomial._raw({k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Rational):
            if other == 0:
                return OperatorPolynomial()
            c = Fraction(other)
            return OperatorPolynomial._raw({k: v * c for k, v in self._terms.items()})
        if not isinstance(other, OperatorPolynomial):
            return NotImplemented
        out: dict[Key, Fraction] = {}
        for (ta, da), ca in self._terms.items():
            for (tb, db), cb in other._terms.items():
                key = (_tau_mul(ta, tb), _d_mul(da, db))
                s = out.get(key, 0) + ca * cb
                if s:
                    out[key] = s
                else:
                    out.pop(key, None)
        return OperatorPolynomial._raw(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not defined")
        result = OperatorPolynomial.constant(1)
        for _ in range(k):
            result = result * self
        return result

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return dict(self._terms) == dict(other._terms)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __bool__(self):
        return bool(self._terms)

    # rendering ----------------------------------------------------------
    def to_text(self) -> str:
        """Canonical text, e.g. ``(1/24)·t4·D4 + (-1/8)·t4·D2.D2``."""
        if not self._terms:
            return "0"
        parts: list[str] = []
        for i, (tau, d, c) in enumerate(self.sorted_terms()):
            atoms = [_tau_text(j, p) for j, p in tau]
            if d:
                atoms.append(".".join(f"D{a}" for a in d))
            body = "·".join(atoms)
            if c.denominator == 1:
                mag = abs(c.numerator)
                coeff = "" if (mag == 1 and body) else str(mag)
                text = coeff + ("·" if coeff and body else "") + body
                if i == 0:
                    parts.append(("-" if c < 0 else "") + text)
                else:
                    parts.append((" - " if c < 0 else " + ") + text)
            else:
                text = f"({c.numerator}/{c.denominator})" + ("·" + body if body else "")
                parts.append(text if i == 0 else " + " + text)
        return "".join(parts)

    def to_json(self) -> dict:
        return {
            "terms": [
                {
                    "coeff_num": c.numerator,
                    "coeff_den": c.denominator,
                    "tau": {str(j): p for j, p in tau},
                    "d_orders": list(d),
                }
                for tau, d, c in self.sorted_terms()
            ]
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "OperatorPolynomial":
        return cls(
            (
                (tuple((int(j), int(p)) for j, p in t["tau"].items()), tuple(t["d_orders"])),
                Fraction(t["coeff_num"], t["coeff_den"]),
            )
            for t in data["terms"]
        )

    def __repr__(self) -> str:
        return f"OperatorPolynomial({self.to_text()!r})"

    __str__ = to_text


def _tau_text(j: int, p: int) -> str:
    name = f"u{j - PRIME_SHIFT}" if j >= PRIME_SHIFT else f"t{j}"
    return name if p == 1 else f"{name}^{p}"


# --------------------------------------------------------------------------
# truncated power series with OperatorPolynomial coefficients
# --------------------------------------------------------------------------

Series = list  # index k holds the coefficient of x**k


def _series_mul(a: Series, b: Series, order: int) -> Series:
    out = [OperatorPolynomial() for _ in range(order + 1)]
    for i, ai in enumerate(a[: order + 1]):
        if ai.is_zero():
            continue
        for j in range(0, order + 1 - i):
            if j < len(b) and not b[j].is_zero():
                out[i + j] = out[i + j] + ai * b[j]
    return out


def _series_exp(x: Series, order: int) -> Series:
    """``exp(x)`` for a series without constant term."""
    if x and not x[0].is_zero():
        raise ValueError("exp needs a series with zero constant term")
    result = [OperatorPolynomial() for _ in range(order + 1)]
    result[0] = OperatorPolynomial.constant(1)
    power = list(result)
    for m in range(1, order + 1):
        power = _series_mul(power, x, order)
        if all(p.is_zero() for p in power):
            break
        inv = Fraction(1, math.factorial(m))
        result = [r + p * inv for r, p in zip(result, power)]
    return result


def _series_log1p(u: Series, order: int) -> Series:
    """``log(1 + u)`` for a series without constant term."""
    if u and not u[0].is_zero():
        raise ValueError("log1p needs a series with zero constant term")
    result = [OperatorPolynomial() for _ in range(order + 1)]
    power = [OperatorPolynomial.constant(1)] + [OperatorPolynomial()] * order
    for k in range(1, order + 1):
        power = _series_mul(power, u, order)
        if all(p.is_zero() for p in power):
            break
        c = Fraction((-1) ** (k + 1), k)
        result = [r + p * c for r, p in zip(result, power)]
    return result


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if not (lo <= value <= hi):
        raise ValueError(f"{name}={value} out of range [{lo}, {hi}]")


@lru_cache(maxsize=None)
def _cumulant_table(max_order: int) -> tuple[OperatorPolynomial, ...]:
    u = [OperatorPolynomial()] * 2 + [
        OperatorPolynomial.d(p, coeff=Fraction(1, math.factorial(p))) for p in range(2, max_order + 1)
    ]
    log = _series_log1p(u, max_order)
    return tuple(log[p] * math.factorial(p) for p in range(max_order + 1))


def cumulant_operator(p: int, max_order: int = MAX_ORDER) -> OperatorPolynomial:
    """Cumulant operator ``kappa_p(D)``, e.g. ``kappa_4 = D4 - 3·D2.D2``."""
    _check_range("p", p, 2, max_order)
    return _cumulant_table(max_order)[p]


TauSpec = Mapping[int, Union[OperatorPolynomial, Scalar]]


def _tau_coeff(tau: TauSpec | None, j: int) -> OperatorPolynomial:
    if tau is None:
        return OperatorPolynomial.tau(j)
    if j not in tau:
        return OperatorPolynomial.tau(j)
    value = tau[j]
    if isinstance(value, OperatorPolynomial):
        return value
    if isinstance(value, Rational):
        return OperatorPolynomial.constant(value)
    raise TypeError(f"tau_{j}: symbolic generation needs an exact value, got {value!r}")


def _edgeworth_series(order: int, tau: TauSpec | None) -> Series:
    kappa = _cumulant_table(max(order + 2, 2))
    x = [OperatorPolynomial()] + [
        _tau_coeff(tau, r + 2) * kappa[r + 2] * Fraction(1, math.factorial(r + 2))
        for r in range(1, order + 1)
    ]
    return _series_exp(x, order)


def _tilde_series(order: int, tau: TauSpec | None) -> Series:
    kappa = _cumulant_table(max(order, 2))
    x = [OperatorPolynomial(), OperatorPolynomial()] + [
        _tau_coeff(tau, j) * kappa[j] * Fraction(1, math.factorial(j)) for j in range(2, order + 1)
    ]
    return _series_exp(x[: order + 1], order)


@lru_cache(maxsize=None)
def _edgeworth_default(max_order: int) -> tuple[OperatorPolynomial, ...]:
    return tuple(_edgeworth_series(max_order, None))


@lru_cache(maxsize=None)
def _tilde_default(max_order: int) -> tuple[OperatorPolynomial, ...]:
    return tuple(_tilde_series(max_order, None))


def edgeworth_polynomial(r: int, tau: TauSpec | None = None, max_order: int = MAX_ORDER) -> OperatorPolynomial:
    """Edgeworth polynomial ``P_r(tau_* kappa_*)``.

    ``tau`` optionally replaces the symbols ``tau_j`` by exact values or by
    other polynomials; unspecified indices stay symbolic.
    """
    _check_range("r", r, 0, max_order)
    if tau is None:
        return _edgeworth_default(max_order)[r]
    return _edgeworth_series(r, tau)[r]


def tilde_polynomial(j: int, tau: TauSpec | None = None, max_order: int = MAX_ORDER) -> OperatorPolynomial:
    """Auxiliary polynomial ``~P_j``; unlike ``P_r`` it carries ``tau_2``."""
    _check_range("j", j, 0, max_order)
    if tau is None:
        return _tilde_default(max_order)[j]
    return _tilde_series(j, tau)[j]


def bracket(poly: OperatorPolynomial, l: int) -> OperatorPolynomial:
    """Keep the terms whose tau-weight ``sum_j j*p_j`` is at most ``l``."""
    if l < 0:
        raise ValueError("bracket level must be non-negative")
    return OperatorPolynomial._raw({k: v for k, v in poly.terms.items() if tau_weight(k[0]) <= l})


def substitute_tau(poly: OperatorPolynomial, values: Mapping[int, Number]) -> dict[DMonomial, Number]:
    """Numeric coefficient of every D-monomial after ``tau_j -> values[j]``.

    Exact inputs (ints, Fractions) give exact outputs.  Every D-monomial of
    ``poly`` appears in the result, even when its value is zero.
    """
    out: dict[DMonomial, Number] = {}
    for tau, d, c in poly.sorted_terms():
        value = c
        for j, p in tau:
            if j not in values:
                raise ValueError(f"no value supplied for tau_{j}")
            value = value * values[j] ** p
        out[d] = out.get(d, 0) + value
    return {d: out[d] for d in sorted(out, key=lambda d: (len(d), d))}


def _tau_values(values: Mapping[int, Number] | None, shift: int, top: int) -> dict[int, OperatorPolynomial]:
    if values is None:
        return {j: OperatorPolynomial.tau(j + shift) for j in range(2, top + 1)}
    return {j: _tau_coeff(values, j) for j in range(2, top + 1)}


def verify_convolution_identity(
    r: int,
    tau: Mapping[int, Number] | None = None,
    tau_prime: Mapping[int, Number] | None = None,
    max_order: int = MAX_ORDER,
) -> bool:
    """Check ``sum_{j+l=r} ~P_j(tau) ~P_l(tau') == ~P_r(tau + tau')`` exactly.

    ``None`` leaves a family symbolic; the primed family uses labels shifted
    by :data:`PRIME_SHIFT`.
    """
    _check_range("r", r, 0, max_order)
    top = max(r, 2)
    a = _tau_values(tau, 0, top)
    b = _tau_values(tau_prime, PRIME_SHIFT, top)
    left = _tilde_series(r, a)
    right = _tilde_series(r, b)
    lhs = OperatorPolynomial()
    for j in range(r + 1):
        lhs = lhs + left[j] * right[r - j]
    rhs = _tilde_series(r, {j: a[j] + b[j] for j in range(2, top + 1)})[r]
    return lhs == rhs


def verify_bracket_statement(l: int, max_order: int = MAX_ORDER) -> bool:
    """``sum_r [P_r]_l == sum_{r=1}^{l} ~P_r`` with ``tau_2 := 0`` on the right."""
    _check_range("l", l, 0, max_order)
    lhs = OperatorPolynomial()
    # a term of P_r has tau-weight > r, so r < l suffices
    for r in range(1, l + 1):
        lhs = lhs + bracket(edgeworth_polynomial(r, max_order=max_order), l)
    rhs_series = _tilde_series(l, {2: 0})
    rhs = OperatorPolynomial()
    for r in range(1, l + 1):
        rhs = rhs + rhs_series[r]
    return lhs == rhs


def verify_telescoping(w: WeightVector, r: int, max_order: int = MAX_ORDER) -> float:
    """Largest coefficient discrepancy in the telescoping identity.

    ``sum_j [P_r(tail_{j+1}) - P_r(tail_j)] = -P_r(eps)``, where ``tail_j``
    holds the power sums of ``eps_j..eps_n``.
    """
    _check_range("r", r, 1, max_order)
    if w.n > 12:
        raise ValueError("telescoping check is limited to n <= 12")
    poly = edgeworth_polynomial(r, max_order=max_order)
    labels = sorted(poly.tau_labels()) or [3]
    x = w.entries

    def tail(j: int) -> dict[int, float]:
        return {d: math.fsum(v**d for v in x[j:]) for d in labels}

    lhs: dict[DMonomial, float] = {}
    for j in range(w.n):
        with_j = substitute_tau(poly, tail(j))
        without_j = substitute_tau(poly, {d: tail(j)[d] - x[j] ** d for d in labels})
        for d in set(with_j) | set(without_j):
            lhs[d] = lhs.get(d, 0.0) + without_j.get(d, 0.0) - with_j.get(d, 0.0)
    rhs = {d: -v for d, v in substitute_tau(poly, {d: w.power_sum(d) for d in labels}).items()}
    keys = set(lhs) | set(rhs)
    return max((abs(lhs.get(d, 0.0) - rhs.get(d, 0.0)) for d in keys), default=0.0)


def verify_power_collapse(j: int, max_order: int = MAX_ORDER) -> bool:
    """With ``tau_p := tau**p`` the polynomial ``~P_j`` is ``tau**j D^j / j!``.

    The single symbol ``tau`` is carried as label 1, which no generator uses.
    """
    _check_range("j", j, 0, max_order)
    powers = {p: OperatorPolynomial.tau(1, p) for p in range(2, max(j, 2) + 1)}
    got = tilde_polynomial(j, tau=powers, max_order=max_order)
    if j == 0:
        return got == OperatorPolynomial.constant(1)
    if j == 1:
        return got.is_zero()
    return got == OperatorPolynomial.tau(1, j) * OperatorPolynomial.d(j, coeff=Fraction(1, math.factorial(j)))


def moment_series_roundtrip(order: int = 10) -> bool:
    """``exp(sum_p eps^p/p! kappa_p) == 1 + sum_p eps^p/p! D^p`` up to ``order``."""
    kappa = _cumulant_table(max(order, 2))
    x = [OperatorPolynomial(), OperatorPolynomial()] + [
        kappa[p] * Fraction(1, math.factorial(p)) for p in range(2, order + 1)
    ]
    lhs = _series_exp(x, order)
    expected = [OperatorPolynomial.constant(1), OperatorPolynomial()] + [
        OperatorPolynomial.d(p, coeff=Fraction(1, math.factorial(p))) for p in range(2, order + 1)
    ]
    return all(a == b for a, b in zip(lhs, expected))
