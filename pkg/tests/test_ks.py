from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symexp.engine import expand
from symexp.errors import ContractError
from symexp.model_ks import (
    KsModel,
    KsProvider,
    inner_expectation,
    ks_derivative_check,
    ks_expansion,
    ks_limit_fn,
    mc_ks_exceedance,
    normal_tail,
    sup_statistic,
)
from symexp.weights import WeightVector, equal_weights, sphere_vector


def birnbaum_tingey(n: int, a: float) -> float:
    """Exact ``P(sqrt(n) sup (F_n - F) > a)`` for a continuous ``F``."""
    eps = a / math.sqrt(n)
    total = 0.0
    for j in range(math.floor(n * (1 - eps)) + 1):
        base = 1 - eps - j / n
        if base <= 0.0:
            continue  # 0 ** (n - j) with n - j >= 1
        log_term = math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
        log_term += (n - j) * math.log(base) + (j - 1) * math.log(eps + j / n)
        total += math.exp(log_term)
    return eps * total


def grid_sup(x: np.ndarray, w: np.ndarray, grid: int = 20001) -> np.ndarray:
    """Brute-force sup over a fine grid joined with the sample points."""
    out = []
    for row in x:
        ts = np.sort(np.concatenate([np.linspace(0, 1, grid), row]))
        ind = (row[None, :] <= ts[:, None]).astype(float)
        out.append(np.max(ind @ w - ts * w.sum()))
    return np.array(out)


class TestModel:
    @pytest.mark.parametrize("kwargs", [{"a": 0.0}, {"a": 1.0, "n_s": 8}, {"a": 1.0, "inner": "mc"}])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            KsModel(**kwargs)

    def test_leading(self):
        assert KsModel(1.0).leading == math.exp(-2.0)

    def test_normal_tail(self):
        assert normal_tail(1.959963984540054) == pytest.approx(0.025, rel=1e-12)


class TestLimitFunction:
    @pytest.mark.parametrize("a", [0.5, 1.0, 1.5, 2.0])
    def test_value_at_zero(self, a):
        assert ks_limit_fn(KsModel(a), 0.0) == pytest.approx(math.exp(-2 * a * a), rel=1e-12)

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    def test_inner_constant_in_s(self, a):
        s = np.linspace(0.01, 0.99, 50)
        assert np.max(np.abs(inner_expectation(KsModel(a), 0.0, s) - math.exp(-2 * a * a))) <= 1e-12

    def test_monotone_in_a(self):
        values = [ks_limit_fn(KsModel(a), 0.2) for a in np.linspace(0.3, 2.5, 12)]
        assert all(x > y for x, y in zip(values, values[1:]))

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=30, deadline=None)
    def test_even_in_lambda(self, lam):
        m = KsModel(1.0)
        assert ks_limit_fn(m, lam) == pytest.approx(ks_limit_fn(m, -lam), abs=1e-12)

    @given(st.floats(-1.0, 1.0), st.floats(0.4, 2.0))
    @settings(max_examples=30, deadline=None)
    def test_probability_range(self, lam, a):
        assert 0.0 <= ks_limit_fn(KsModel(a), lam) <= 1.0

    @pytest.mark.parametrize("lam", [0.1, 0.3, 0.8])
    def test_hermite_cross_check(self, lam):
        exact = ks_limit_fn(KsModel(1.0), lam)
        hermite = ks_limit_fn(KsModel(1.0, inner="hermite", n_x=200), lam)
        assert hermite == pytest.approx(exact, abs=1e-3)

    def test_vectorised(self):
        m = KsModel(1.0)
        lams = np.array([0.0, 0.25, -0.5])
        assert np.allclose(ks_limit_fn(m, lams), [ks_limit_fn(m, x) for x in lams], atol=1e-15)

    def test_domain(self):
        with pytest.raises(ContractError):
            ks_limit_fn(KsModel(1.0), 1.5)


class TestDerivative:
    @pytest.mark.parametrize("a", [0.5, 1.0, 1.5, 2.0])
    def test_third(self, a):
        assert ks_derivative_check(KsModel(a)) == pytest.approx(-4 * a * math.exp(-2 * a * a), abs=1e-6)

    def test_provider(self):
        p = KsProvider(KsModel(1.0))
        assert p(()) == pytest.approx(math.exp(-2.0))
        assert p((3,)).real == pytest.approx(-4 * math.exp(-2.0), abs=1e-6)

    def test_multi_slot_refused(self):
        with pytest.raises(ContractError, match="s <= 4"):
            KsProvider(KsModel(1.0))((2, 2))


class TestExpansion:
    def test_example(self):
        assert ks_expansion(KsModel(1.0), equal_weights(100)) == pytest.approx(0.126313, abs=1e-6)

    @pytest.mark.parametrize("a, n", [(1.0, 100), (0.75, 50), (1.5, 400)])
    def test_formula(self, a, n):
        lead = math.exp(-2 * a * a)
        assert ks_expansion(KsModel(a), equal_weights(n)) == pytest.approx(lead - 4 * a * lead / (6 * math.sqrt(n)), abs=1e-15)

    def test_engine_agrees(self):
        w = sphere_vector(60, 2, 5)
        res = expand(KsProvider(KsModel(1.0)), w, 4)
        assert res.total().real == pytest.approx(ks_expansion(KsModel(1.0), w), abs=1e-6)

    def test_engine_refuses_s5(self):
        with pytest.raises(ContractError):
            expand(KsProvider(KsModel(1.0)), equal_weights(20), 5)

    def test_non_unit(self):
        with pytest.raises(ContractError):
            ks_expansion(KsModel(1.0), WeightVector([1.0, 1.0]))


class TestBirnbaumTingey:
    def test_reference_values(self):
        # frozen from the exact finite sum
        assert birnbaum_tingey(100, 1.0) == pytest.approx(0.126591, abs=1e-6)
        assert birnbaum_tingey(100, 0.75) == pytest.approx(0.309149, abs=1e-6)

    def test_expansion_beats_leading(self):
        exact = birnbaum_tingey(100, 1.0)
        m = KsModel(1.0)
        assert abs(ks_expansion(m, equal_weights(100)) - exact) < abs(m.leading - exact)


class TestSupStatistic:
    def test_single_point(self):
        # one weight 1: sup is max(1 - x, -x) = 1 - x
        x = np.array([[0.3], [0.9]])
        assert sup_statistic(x, np.array([1.0])) == pytest.approx([0.7, 0.1])

    def test_against_grid(self):
        rng = np.random.default_rng(3)
        w = sphere_vector(7, 1, 0).as_array()
        x = rng.random((20, 7))
        exact = sup_statistic(x, w)
        brute = grid_sup(x, w)
        assert np.all(exact >= brute - 1e-12)
        assert np.max(exact - brute) <= 2 * np.abs(w).sum() / 20000 + 1e-12

    def test_large_threshold(self):
        m = KsModel(10.0, reps=10_000)
        assert mc_ks_exceedance(m, equal_weights(30)) == (0.0, 0.0)

    def test_min_reps(self):
        with pytest.raises(ValueError, match="10000"):
            mc_ks_exceedance(KsModel(1.0, reps=9_999), equal_weights(30))


class TestMonteCarlo:
    def test_thread_determinism(self):
        m = KsModel(1.0, reps=40_000, seed=7)
        w = equal_weights(40)
        assert mc_ks_exceedance(m, w, threads=1) == mc_ks_exceedance(m, w, threads=3)

    def test_seed_changes_estimate(self):
        w = equal_weights(40)
        assert mc_ks_exceedance(KsModel(1.0, reps=20_000, seed=1), w) != mc_ks_exceedance(KsModel(1.0, reps=20_000, seed=2), w)

    @pytest.mark.slow
    @pytest.mark.parametrize("a", [1.0, 0.75])
    def test_matches_exact(self, a):
        p, se = mc_ks_exceedance(KsModel(a, reps=200_000, seed=11), equal_weights(100), threads=4)
        assert abs(p - birnbaum_tingey(100, a)) <= 3 * se

    @pytest.mark.slow
    @pytest.mark.parametrize("a", [0.75, 1.0])
    def test_brackets_expansion(self, a):
        m = KsModel(a, reps=10**6, seed=0)
        p, se = mc_ks_exceedance(m, equal_weights(100), threads=4)
        assert abs(p - ks_expansion(m, equal_weights(100))) <= 3 * se
