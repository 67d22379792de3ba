"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (collected again in the
terminal summary).  Every tolerance is pinned here as a module constant.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np

from symexp import opalgebra as alg
from symexp.fd import fd_derivative
from symexp.harness import SUITES, canonical_json, fit_slope, rerun_manifest, run_sphere_experiment, run_suite
from symexp.model_clt import CltModel, CltProvider, clt_expand, clt_limit_evaluator, exact_char_product
from symexp.model_ks import KsModel, ks_derivative_check, ks_expansion, ks_limit_fn, mc_ks_exceedance
from symexp.model_vonmises import VonMisesModel, canonical_kernel, exact_small_n_charfn, phi_factor, transformed_kernels, vonmises_expand
from symexp.opalgebra import OperatorPolynomial
from symexp.weights import equal_weights

D = OperatorPolynomial.d
T = OperatorPolynomial.tau

ALGEBRA_SECONDS = 1.0
IDENTITY_SECONDS = 30.0
TELESCOPING_TOL = 1e-10
S5_NUMERIC_TOL = 1e-12
SLOPE_TOL = 0.2
RADEMACHER_SLOPE_TOL = 0.15
LADDER_SECONDS = 60.0
FD_REL_TOL = 1e-5
KS_H0_TOL = 1e-6
KS_D3_TOL = 1e-3
KS_MC_SIGMAS = 3.0
KS_SECONDS = 120.0
VM_INVARIANT_TOL = 1e-10
VM_MONOTONE_SLACK = 1e-12
SPHERE_SLOPE_TOL = 0.2
SPHERE_MEAN_REL = 0.05

N_LADDER = [16, 32, 64, 128, 256, 512, 1024]


def _clear_algebra_caches() -> None:
    for name in ("_cumulant_table", "_edgeworth_default", "_tilde_default"):
        getattr(alg, name).cache_clear()


def test_c1_exact_algebra(criterion):
    _clear_algebra_caches()
    start = time.perf_counter()
    kappa4 = D(4) - 3 * D(2, 2)
    checks = {
        "kappa2": alg.cumulant_operator(2) == D(2),
        "kappa3": alg.cumulant_operator(3) == D(3),
        "kappa4": alg.cumulant_operator(4) == kappa4,
        "P1": alg.edgeworth_polynomial(1) == T(3) * D(3) * Fraction(1, 6),
        "P2": alg.edgeworth_polynomial(2) == T(4) * kappa4 * Fraction(1, 24) + T(3, 2) * D(3, 3) * Fraction(1, 72),
        "Pt0": alg.tilde_polynomial(0) == OperatorPolynomial.constant(1),
        "Pt1": alg.tilde_polynomial(1).is_zero(),
        "Pt2": alg.tilde_polynomial(2) == T(2) * D(2) * Fraction(1, 2),
        "Pt3": alg.tilde_polynomial(3) == T(3) * D(3) * Fraction(1, 6),
        "Pt4": alg.tilde_polynomial(4) == T(4) * kappa4 * Fraction(1, 24) + T(2, 2) * D(2, 2) * Fraction(1, 8),
    }
    elapsed = time.perf_counter() - start
    failed = [k for k, ok in checks.items() if not ok]
    criterion(
        "C1 exact algebra",
        not failed and elapsed < ALGEBRA_SECONDS,
        f"{len(checks) - len(failed)}/{len(checks)} exact matches in {elapsed:.3f}s (limit {ALGEBRA_SECONDS}s)",
    )


def test_c2_identity_suite(criterion):
    _clear_algebra_caches()
    start = time.perf_counter()
    report = run_suite("algebra", seed=0)
    elapsed = time.perf_counter() - start
    r = report.results
    cfg = report.config
    ok = (
        r["roundtrip"]
        and all(r["power_collapse"]) and len(r["power_collapse"]) == 9
        and all(r["convolution_symbolic"]) and len(r["convolution_symbolic"]) == 9
        and r["convolution_random_passed"] == r["convolution_random_cases"] == 100
        and all(r["bracket"]) and len(r["bracket"]) == 7
        and cfg["telescoping_cases"] == 200 and cfg["telescoping_r"] == 4 and cfg["telescoping_n"] == 8
        and r["telescoping_max_discrepancy"] <= TELESCOPING_TOL
        and elapsed < IDENTITY_SECONDS
    )
    criterion(
        "C2 identity suite",
        ok,
        f"roundtrip order 10, collapse j<=8, convolution r<=8 + {r['convolution_random_passed']}/100 random, "
        f"bracket l<=6, telescoping max {r['telescoping_max_discrepancy']:.2e} (tol {TELESCOPING_TOL}); {elapsed:.2f}s",
    )


def _closed_form_s5(m: CltModel, n: int) -> complex:
    eps3, eps4 = n**-0.5, 1.0 / n
    it = 1j * m.t
    b3, b4 = m.beta(3), m.beta(4)
    return math.exp(-m.t**2 / 2) * (
        1 + eps3 / 6 * it**3 * b3 + eps4 / 24 * (b4 - 3) * it**4 + (b3 * eps3) ** 2 / 72 * it**6
    )


def test_c3_s5_structure(criterion):
    total = alg.edgeworth_polynomial(1) + alg.edgeworth_polynomial(2)
    got = {(tau, d): c for tau, d, c in total.sorted_terms()}
    expected = {
        (((3, 1),), (3,)): Fraction(1, 6),
        (((4, 1),), (4,)): Fraction(1, 24),
        (((4, 1),), (2, 2)): Fraction(-3, 24),
        (((3, 2),), (3, 3)): Fraction(1, 72),
    }
    symbolic = got == expected
    worst = 0.0
    for t in (0.5, 1.0, 2.0):
        m = CltModel.two_point(t, 0.2, 2.0, -0.5)
        for n in (4, 16, 100, 1024):
            res = clt_expand(m, equal_weights(n), 5)
            worst = max(worst, abs(res.total() - _closed_form_s5(m, n)))
            coeffs = {tuple(row["d_orders"]): row["coeff"] for rows in res.diagnostics.values() for row in rows}
            ref = {(3,): n**-0.5 / 6, (4,): 1 / (24 * n), (2, 2): -3 / (24 * n), (3, 3): 1 / (72 * n)}
            for d, c in ref.items():
                worst = max(worst, abs(coeffs[d] - c))
    criterion(
        "C3 s=5 structure",
        symbolic and worst <= S5_NUMERIC_TOL,
        f"symbolic coefficients {'match' if symbolic else 'differ'}; max numeric deviation {worst:.2e} (tol {S5_NUMERIC_TOL})",
    )


def _ladder_errors(m: CltModel, s: int) -> list[float]:
    return [abs(exact_char_product(m, equal_weights(n)) - clt_expand(m, equal_weights(n), s).total()) for n in N_LADDER]


def test_c4_rate_ladder(criterion):
    start = time.perf_counter()
    m = CltModel.two_point(1.0, 0.2, 2.0, -0.5)
    slopes = {s: fit_slope(N_LADDER, _ladder_errors(m, s))[0] for s in (3, 4, 5)}
    rad = fit_slope(N_LADDER, _ladder_errors(CltModel.rademacher(1.0), 3))[0]
    elapsed = time.perf_counter() - start
    targets = {3: -0.5, 4: -1.0, 5: -1.5}
    ok = all(abs(slopes[s] - targets[s]) <= SLOPE_TOL for s in targets)
    ok = ok and abs(rad + 1.0) <= RADEMACHER_SLOPE_TOL and elapsed < LADDER_SECONDS
    criterion(
        "C4 rate ladder",
        ok,
        f"slopes s=3 {slopes[3]:.3f}, s=4 {slopes[4]:.3f}, s=5 {slopes[5]:.3f} (tol {SLOPE_TOL}); "
        f"Rademacher s=3 {rad:.3f} (tol {RADEMACHER_SLOPE_TOL}); {elapsed:.2f}s",
    )


def _multisets(total: int, max_slots: int = 4):
    out = []

    def grow(prefix, remaining, smallest):
        if prefix:
            out.append(tuple(prefix))
        if len(prefix) == max_slots:
            return
        for p in range(smallest, remaining + 1):
            grow(prefix + [p], remaining - p, p)

    grow([], total, 1)
    return out


def test_c5_fd_correctness(criterion):
    # nonzero analytic values: relative error; multisets with an order-1 part
    # are exactly zero (beta_1 = 0), so they are measured against |t|^sum e^{-t^2/2}
    worst_rel, worst_zero, count = 0.0, 0.0, 0
    for t in (0.5, 1.0, 2.0):
        m = CltModel.two_point(t, 0.2, 2.0, -0.5)
        provider, evaluator = CltProvider(m), clt_limit_evaluator(m)
        for orders in _multisets(6):
            exact = provider(orders)
            approx, _ = fd_derivative(evaluator, orders)
            count += 1
            if exact != 0:
                worst_rel = max(worst_rel, abs(approx - exact) / abs(exact))
            else:
                scale = abs(t) ** sum(orders) * math.exp(-t * t / 2)
                worst_zero = max(worst_zero, abs(approx) / scale)
    criterion(
        "C5 FD correctness",
        worst_rel <= FD_REL_TOL and worst_zero <= FD_REL_TOL,
        f"{count} cases; max relative error {worst_rel:.2e}, zero-valued cases {worst_zero:.2e} (tol {FD_REL_TOL})",
    )


def test_c6_ks(criterion):
    start = time.perf_counter()
    h0 = max(abs(ks_limit_fn(KsModel(a), 0.0) - math.exp(-2 * a * a)) for a in (0.5, 1.0, 2.0))
    d3 = max(abs(ks_derivative_check(KsModel(a)) + 4 * a * math.exp(-2 * a * a)) for a in (0.5, 1.0, 2.0))
    m = KsModel(1.0, reps=10**6, seed=0)
    w = equal_weights(100)
    p, se = mc_ks_exceedance(m, w, threads=4)
    expansion = ks_expansion(m, w)
    target = math.exp(-2.0) * (1 - 2 / 30)
    elapsed = time.perf_counter() - start
    ok = (
        h0 <= KS_H0_TOL
        and d3 <= KS_D3_TOL
        and abs(p - target) <= KS_MC_SIGMAS * se
        and abs(p - expansion) < abs(p - m.leading)
        and elapsed < KS_SECONDS
    )
    criterion(
        "C6 KS",
        ok,
        f"h(0) err {h0:.1e} (tol {KS_H0_TOL}); d3 err {d3:.1e} (tol {KS_D3_TOL}); "
        f"MC {p:.5f} +- {se:.5f} vs {target:.5f} ({abs(p - target) / se:.2f} se, limit {KS_MC_SIGMAS}); "
        f"leading {m.leading:.5f}; {elapsed:.1f}s",
    )


def test_c7_vonmises(criterion):
    kernel = canonical_kernel(0.4)
    inv = abs(phi_factor(VonMisesModel(kernel, 0.0)) - 1.0)
    for t in (0.0, 0.25, 0.5):
        ht, gt = transformed_kernels(VonMisesModel(kernel, t))
        inv = max(inv, float(np.max(np.abs(ht @ kernel.mu))), float(abs(gt @ kernel.mu)), float(np.max(np.abs(ht - ht.T))))
    monotone = True
    table = []
    for t in (0.25, 0.5):
        m = VonMisesModel(kernel, t)
        for n in (6, 8):
            w = equal_weights(n)
            exact = exact_small_n_charfn(m, w)
            res = vonmises_expand(m, w, 5)
            errs = [abs(exact - res.total(R + 3)) for R in range(3)]
            monotone = monotone and all(b <= a + VM_MONOTONE_SLACK for a, b in zip(errs, errs[1:]))
            table.append(f"t={t} n={n} " + "/".join(f"{e:.1e}" for e in errs))
    criterion(
        "C7 von Mises",
        inv <= VM_INVARIANT_TOL and monotone,
        f"invariants max {inv:.1e} (tol {VM_INVARIANT_TOL}); errors R=0/1/2 nonincreasing "
        f"(slack {VM_MONOTONE_SLACK}): {'; '.join(table)}",
    )


def test_c8_sphere(criterion):
    table = run_sphere_experiment([50, 100, 200, 400], 10**4, seed=0, threads=4)
    mean_dev = max(abs(r["mean_e4"] / r["expected_mean_e4"] - 1) for r in table.rows)
    ok = (
        abs(table.slope_abs_e3 + 1.0) <= SPHERE_SLOPE_TOL
        and abs(table.slope_e4 + 1.0) <= SPHERE_SLOPE_TOL
        and mean_dev <= SPHERE_MEAN_REL
    )
    criterion(
        "C8 sphere",
        ok,
        f"slopes median|e3| {table.slope_abs_e3:.3f}, median e4 {table.slope_e4:.3f} (tol {SPHERE_SLOPE_TOL}); "
        f"mean e4 max rel deviation {mean_dev:.3%} (tol {SPHERE_MEAN_REL:.0%})",
    )


def test_c9_reproducibility(criterion):
    mismatched = []
    for name in sorted(SUITES):
        first = run_suite(name, seed=7, threads=1)
        again, same = rerun_manifest(first.manifest, threads=4)
        if not (same and canonical_json(again.to_json()) == canonical_json(first.to_json()) and again.rows == first.rows):
            mismatched.append(name)
    criterion(
        "C9 reproducibility",
        not mismatched,
        f"{len(SUITES) - len(mismatched)}/{len(SUITES)} suites reproduce bit-exactly from their manifest at 1 vs 4 threads"
        + (f"; mismatched: {', '.join(mismatched)}" if mismatched else ""),
    )
