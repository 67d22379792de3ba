"""Reproducible experiments: decay-slope fits, Monte Carlo estimates, the
sphere experiment and the named ``verify`` suites.

Every stochastic number is drawn from counter-based streams addressed by
``(seed, block)`` with a fixed block size, and aggregated in block order, so
results do not depend on the number of worker threads.  A suite run emits a
manifest holding its seed, full configuration and a content hash of the
results; re-running the manifest must reproduce the hash exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from . import opalgebra as alg
from .errors import ContractError
from .fd import FDConfig, fd_derivative
from .model_clt import CltProvider, clt_expand, clt_limit_evaluator, exact_char_product, parse_distribution
from .model_ks import KsModel, ks_derivative_check, ks_expansion, ks_limit_fn, mc_ks_exceedance
from .model_vonmises import (
    VonMisesModel,
    canonical_binomial_charfn,
    exact_small_n_charfn,
    load_kernel,
    phi_factor,
    transformed_kernels,
    vonmises_expand,
)
from .rng import DOMAIN_ALGEBRA, DOMAIN_CF, stream
from .weights import WeightVector, equal_weights, klartag_sodin_stats, sample_uniform_sphere, sphere_vector

__all__ = [
    "ModelSpec",
    "DecayExperiment",
    "SlopeFit",
    "SphereTable",
    "fit_slope",
    "run_decay",
    "mc_estimate",
    "run_sphere_experiment",
    "SUITES",
    "SuiteReport",
    "run_suite",
    "rerun_manifest",
    "canonical_json",
    "write_csv",
]

MC_BLOCK = 1 << 14
# exact oracles are products or sums of n rounded factors
_EPS_PER_TERM = 16 * 2.0**-52
_MEDIAN_SE = math.sqrt(math.pi / 2)


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """One of the three models with its parameters.

    ``dist`` and ``t`` apply to ``clt``; ``kernel`` and ``t`` to
    ``vonmises``; ``a`` and ``reps`` to ``ks``.
    """

    kind: str
    t: float = 1.0
    dist: str = "twopoint:0.2:2:-0.5"
    kernel: str = "canonical"
    a: float = 1.0
    reps: int = 10**6

    def __post_init__(self):
        if self.kind not in ("clt", "vonmises", "ks"):
            raise ValueError(f"unknown model {self.kind!r}")

    def build(self, seed: int = 0):
        if self.kind == "clt":
            return parse_distribution(self.dist, self.t)
        if self.kind == "vonmises":
            return VonMisesModel(load_kernel(self.kernel), self.t)
        return KsModel(self.a, reps=self.reps, seed=seed)

    def to_json(self) -> dict:
        return asdict(self)


def expansion_total(spec: ModelSpec, w: WeightVector, s: int, threads: int = 1) -> complex:
    model = spec.build()
    if spec.kind == "clt":
        return clt_expand(model, w, s, threads=threads).total()
    if spec.kind == "vonmises":
        return vonmises_expand(model, w, s, threads=threads).total()
    if s == 3:
        return complex(model.leading)
    if s == 4:
        return complex(ks_expansion(model, w))
    raise ContractError("the KS expansion is available for s in {3, 4}")


def _is_canonical_equal(spec: ModelSpec, w: WeightVector) -> bool:
    return spec.kernel.split(":")[0] == "canonical" and len(set(w.entries)) == 1


def oracle_value(spec: ModelSpec, w: WeightVector, seed: int = 0, threads: int = 1) -> tuple[complex, float, float]:
    """``(value, stderr, noise_floor)`` of the model's reference value."""
    floor = _EPS_PER_TERM * w.n
    if spec.kind == "clt":
        return exact_char_product(spec.build(), w), 0.0, floor
    if spec.kind == "vonmises":
        model = spec.build()
        if _is_canonical_equal(spec, w):
            return canonical_binomial_charfn(float(model.kernel.q[0]), model.t, w.n), 0.0, floor
        return exact_small_n_charfn(model, w), 0.0, floor
    estimate, stderr = mc_ks_exceedance(spec.build(seed), w, threads=threads)
    return complex(estimate), stderr, stderr


# --------------------------------------------------------------------------
# decay experiments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayExperiment:
    model: ModelSpec
    n_grid: tuple[int, ...]
    s: int
    weights: str = "equal"
    replicates: int = 1
    seed: int = 0

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if len(grid) < 4 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n-grid must be strictly increasing with at least 4 points")
        if self.weights not in ("equal", "sphere"):
            raise ValueError("weight family must be 'equal' or 'sphere'")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")

    def to_json(self) -> dict:
        out = asdict(self)
        out["model"] = self.model.to_json()
        out["n_grid"] = list(self.n_grid)
        return out


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n: list[int]
    errors: list[float]
    stderr: list[float]
    excluded: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def fit_slope(ns, errors, stderr=None) -> tuple[float, float, float]:
    """Least-squares line through ``(log n, log error)``.

    With positive standard errors each point is weighted by the inverse
    variance of its log error, ``(error / stderr)^2``.
    """
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if len(x) < 2:
        raise ValueError("need at least two points to fit a slope")
    se = np.zeros_like(x) if stderr is None else np.asarray(stderr, dtype=float)
    wts = np.asarray(errors, dtype=float) / se if np.all(se > 0) else np.ones_like(x)
    slope, intercept = np.polyfit(x, y, 1, w=wts)
    w2 = wts**2
    ybar = np.sum(w2 * y) / np.sum(w2)
    ss_tot = float(np.sum(w2 * (y - ybar) ** 2))
    ss_res = float(np.sum(w2 * (y - (slope * x + intercept)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), min(max(r2, 0.0), 1.0)


def _decay_point(e: DecayExperiment, n: int, threads: int) -> tuple[float, float, float]:
    if e.weights == "equal":
        vectors = [equal_weights(n)]
    else:
        vectors = [sphere_vector(n, e.seed, i) for i in range(e.replicates)]
    errs, ses, floors = [], [], []
    for w in vectors:
        value, se, floor = oracle_value(e.model, w, e.seed, threads)
        errs.append(abs(value - expansion_total(e.model, w, e.s, threads)))
        ses.append(se)
        floors.append(floor)
    if len(errs) == 1:
        return errs[0], ses[0], floors[0]
    arr = np.asarray(errs)
    spread = _MEDIAN_SE * float(np.std(arr, ddof=1)) / math.sqrt(len(arr))
    return float(np.median(arr)), max(spread, max(ses)), max(floors)


def run_decay(e: DecayExperiment, threads: int = 1) -> SlopeFit:
    """Fit the decay exponent of ``|oracle - total(s)|`` over ``e.n_grid``.

    Points whose error is below ten times the oracle noise floor are dropped
    with a warning; fewer than four surviving points is an error.
    """
    if e.model.kind == "ks" or threads <= 1:
        points = [_decay_point(e, n, threads) for n in e.n_grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(lambda n: _decay_point(e, n, 1), e.n_grid))
    keep, excluded, warnings = [], [], []
    for n, (err, se, floor) in zip(e.n_grid, points):
        if err < 10.0 * floor:
            excluded.append(n)
            warnings.append(f"n={n}: error {err:.3e} below 10x noise floor {floor:.3e}; excluded")
        else:
            keep.append((n, err, se))
    if len(keep) < 4:
        raise ContractError(f"only {len(keep)} points above the noise floor; at least 4 are needed")
    ns, errs, ses = (list(col) for col in zip(*keep))
    slope, intercept, r2 = fit_slope(ns, errs, ses)
    return SlopeFit(slope, intercept, r2, ns, errs, ses, excluded, warnings)


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------


def _cf_block_sums(spec: ModelSpec, model, weights: np.ndarray, seed: int, block: int, size: int) -> tuple[float, ...]:
    rng = stream(seed, block, DOMAIN_CF)
    if spec.kind == "clt":
        stat = model.sample(rng, (size, len(weights))) @ weights
        phase = model.t * stat
    else:
        k = model.kernel
        idx = rng.choice(k.d, size=(size, len(weights)), p=k.mu)
        proj = k.e[:, idx] @ weights  # (K, size)
        stat = k.g[idx] @ weights + k.q @ proj**2
        phase = model.t * stat
    c, s = np.cos(phase), np.sin(phase)
    return float(c.sum()), float(s.sum()), float(c @ c), float(s @ s)


def mc_estimate(spec: ModelSpec, w: WeightVector, reps: int, seed: int = 0, threads: int = 1):
    """Monte Carlo mean and standard error.

    For ``clt`` and ``vonmises`` this estimates ``E exp(it w_n)`` and the
    standard error is returned as ``complex(se_re, se_im)``; for ``ks`` it
    estimates the exceedance probability.
    """
    if reps < 1000:
        raise ValueError("Monte Carlo needs reps >= 1000")
    if spec.kind == "ks":
        return mc_ks_exceedance(replace(spec.build(seed), reps=reps, seed=seed), w, threads=threads)
    model = spec.build()
    weights = w.as_array()
    jobs = [(b, min(MC_BLOCK, reps - start)) for b, start in enumerate(range(0, reps, MC_BLOCK))]
    run = lambda job: _cf_block_sums(spec, model, weights, seed, *job)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sums = list(pool.map(run, jobs))
    else:
        sums = [run(job) for job in jobs]
    sc, ss, scc, sss = (math.fsum(col) for col in zip(*sums))
    mean_re, mean_im = sc / reps, ss / reps
    var_re = max(scc - reps * mean_re**2, 0.0) / (reps - 1)
    var_im = max(sss - reps * mean_im**2, 0.0) / (reps - 1)
    return complex(mean_re, mean_im), complex(math.sqrt(var_re / reps), math.sqrt(var_im / reps))


# --------------------------------------------------------------------------
# sphere experiment
# --------------------------------------------------------------------------


@dataclass
class SphereTable:
    rows: list[dict]
    slope_abs_e3: float
    slope_e4: float

    def to_json(self) -> dict:
        return asdict(self)


def _sphere_row(n: int, samples: int, seed: int) -> dict:
    stats = np.array([klartag_sodin_stats(s.vector) for s in sample_uniform_sphere(n, seed, samples)])
    e3, e4 = stats[:, 0], stats[:, 1]
    return {
        "n": n,
        "median_abs_e3": float(np.median(e3)),
        "p90_abs_e3": float(np.quantile(e3, 0.9)),
        "median_e4": float(np.median(e4)),
        "p90_e4": float(np.quantile(e4, 0.9)),
        "mean_e4": float(np.mean(e4)),
        "expected_mean_e4": 3.0 / (n + 2),
    }


def run_sphere_experiment(n_grid, samples: int, seed: int = 0, threads: int = 1) -> SphereTable:
    """Quantiles of ``|sum eps^3|`` and ``sum eps^4`` over uniform sphere samples."""
    if samples < 1000:
        raise ValueError("the sphere experiment needs at least 1000 samples")
    grid = [int(n) for n in n_grid]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda n: _sphere_row(n, samples, seed), grid))
    else:
        rows = [_sphere_row(n, samples, seed) for n in grid]
    s3 = fit_slope(grid, [r["median_abs_e3"] for r in rows])[0]
    s4 = fit_slope(grid, [r["median_e4"] for r in rows])[0]
    return SphereTable(rows, s3, s4)


# --------------------------------------------------------------------------
# verify suites
# --------------------------------------------------------------------------


def _suite_algebra(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    top = cfg["max_order"]
    texts = {f"kappa{p}": alg.cumulant_operator(p).to_text() for p in range(2, 7)}
    texts.update({f"P{r}": alg.edgeworth_polynomial(r).to_text() for r in range(0, 4)})
    texts.update({f"Ptilde{j}": alg.tilde_polynomial(j).to_text() for j in range(0, 5)})
    random_ok = 0
    for case in range(cfg["random_cases"]):
        rng = stream(seed, case, DOMAIN_ALGEBRA)
        r = int(rng.integers(1, cfg["convolution_r"] + 1))

        def draw():
            return {j: Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 8))) for j in range(2, max(r, 2) + 1)}

        random_ok += alg.verify_convolution_identity(r, draw(), draw())
    worst = 0.0
    for case in range(cfg["telescoping_cases"]):
        rng = stream(seed, 10**6 + case, DOMAIN_ALGEBRA)
        n = int(rng.integers(1, cfg["telescoping_n"] + 1))
        r = int(rng.integers(1, cfg["telescoping_r"] + 1))
        worst = max(worst, alg.verify_telescoping(WeightVector(rng.standard_normal(n)), r))
    results = {
        "texts": texts,
        "roundtrip": alg.moment_series_roundtrip(top if top <= 10 else 10),
        "power_collapse": [alg.verify_power_collapse(j) for j in range(0, cfg["collapse_j"] + 1)],
        "convolution_symbolic": [alg.verify_convolution_identity(r) for r in range(0, cfg["convolution_r"] + 1)],
        "convolution_random_passed": random_ok,
        "convolution_random_cases": cfg["random_cases"],
        "bracket": [alg.verify_bracket_statement(l) for l in range(0, cfg["bracket_l"] + 1)],
        "telescoping_max_discrepancy": worst,
    }
    return results, []


def _suite_clt(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    results, rows = {}, []
    for label, dist, s in [("twopoint", cfg["dist"], s) for s in cfg["s_values"]] + [("rademacher", "rademacher", 3)]:
        spec = ModelSpec("clt", t=cfg["t"], dist=dist)
        fit = run_decay(DecayExperiment(spec, tuple(cfg["n_grid"]), s, seed=seed), threads)
        name = f"{label}_s{s}"
        results[name] = fit.to_json()
        rows += [(name, n, e, se) for n, e, se in zip(fit.n, fit.errors, fit.stderr)]
    return results, rows


def _multisets(max_total: int, min_part: int = 2):
    def grow(prefix, remaining, smallest):
        for part in range(smallest, remaining + 1):
            yield prefix + (part,)
            yield from grow(prefix + (part,), remaining - part, part)

    return sorted(grow((), max_total, min_part), key=lambda d: (sum(d), len(d), d))


def _suite_fd(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    config = FDConfig(step=cfg["step"], accuracy=cfg["accuracy"])
    worst, cases = 0.0, []
    for t in cfg["t_values"]:
        model = parse_distribution(cfg["dist"], t)
        provider, evaluator = CltProvider(model), clt_limit_evaluator(model)
        for orders in _multisets(cfg["max_total"]):
            exact = provider(orders)
            approx, _ = fd_derivative(evaluator, orders, config)
            rel = abs(approx - exact) / abs(exact)
            worst = max(worst, rel)
            cases.append({"t": t, "orders": list(orders), "relative_error": rel})
    return {"max_relative_error": worst, "cases": cases}, []


def _suite_ks(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    limit = []
    for a in cfg["a_values"]:
        m = KsModel(a)
        limit.append(
            {
                "a": a,
                "h0": ks_limit_fn(m, 0.0),
                "leading": m.leading,
                "d3": ks_derivative_check(m),
                "d3_expected": -4.0 * a * m.leading,
            }
        )
    mc = []
    for a in cfg["mc_a"]:
        m = KsModel(a, reps=cfg["reps"], seed=seed)
        w = equal_weights(cfg["n"])
        estimate, stderr = mc_ks_exceedance(m, w, threads=threads)
        mc.append({"a": a, "n": cfg["n"], "estimate": estimate, "stderr": stderr,
                   "expansion": ks_expansion(m, w), "leading": m.leading})
    return {"limit": limit, "mc": mc}, [(f"ks_a{r['a']}", r["n"], abs(r["estimate"] - r["expansion"]), r["stderr"]) for r in mc]


def _suite_vonmises(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    kernel = load_kernel(cfg["kernel"])
    results: dict = {"invariants": [], "errors": []}
    rows = []
    for t in [0.0] + list(cfg["t_values"]):
        m = VonMisesModel(kernel, t)
        ht, gt = transformed_kernels(m)
        results["invariants"].append(
            {
                "t": t,
                "degeneracy": float(np.max(np.abs(ht @ kernel.mu))),
                "g_mean": float(abs(gt @ kernel.mu)),
                "phi": phi_factor(m),
            }
        )
    for t in cfg["t_values"]:
        m = VonMisesModel(kernel, t)
        for n in cfg["n_values"]:
            w = equal_weights(n)
            exact = exact_small_n_charfn(m, w)
            res = vonmises_expand(m, w, cfg["max_R"] + 3, threads=threads)
            errs = [abs(exact - res.total(R + 3)) for R in range(cfg["max_R"] + 1)]
            results["errors"].append({"t": t, "n": n, "exact": exact, "errors": errs})
            rows += [(f"vonmises_t{t}_R{R}", n, e, 0.0) for R, e in enumerate(errs)]
    return results, rows


def _suite_sphere(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    table = run_sphere_experiment(cfg["n_grid"], cfg["samples"], seed, threads)
    rows = [("median_abs_e3", r["n"], r["median_abs_e3"], 0.0) for r in table.rows]
    rows += [("median_e4", r["n"], r["median_e4"], 0.0) for r in table.rows]
    return table.to_json(), rows


def _suite_klartag_sodin(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    out = []
    for n in cfg["n_grid"]:
        model = parse_distribution(cfg["dist"], cfg["t"])
        gauss = math.exp(-cfg["t"] ** 2 / 2)
        errs = np.array(
            [abs(exact_char_product(model, s.vector) - gauss) for s in sample_uniform_sphere(n, seed, cfg["samples"])]
        )
        equal = abs(exact_char_product(model, equal_weights(n)) - gauss)
        out.append({"n": n, "median": float(np.median(errs)), "p90": float(np.quantile(errs, 0.9)), "equal": equal})
    slope = fit_slope([r["n"] for r in out], [r["median"] for r in out])[0]
    return {"rows": out, "median_slope": slope}, [("clt_sphere_median", r["n"], r["median"], 0.0) for r in out]


def _suite_mc(cfg: dict, seed: int, threads: int) -> tuple[dict, list]:
    spec = ModelSpec("clt", t=cfg["t"], dist=cfg["dist"])
    w = equal_weights(cfg["n"])
    mean, se = mc_estimate(spec, w, cfg["reps"], seed, threads)
    exact = exact_char_product(spec.build(), w)
    return {"mean": mean, "stderr": se, "exact": exact}, []


SuiteFn = Callable[[dict, int, int], tuple[dict, list]]

SUITES: dict[str, tuple[dict, SuiteFn]] = {
    "algebra": (
        {"max_order": 12, "collapse_j": 8, "convolution_r": 8, "random_cases": 100, "bracket_l": 6,
         "telescoping_cases": 200, "telescoping_r": 4, "telescoping_n": 8},
        _suite_algebra,
    ),
    "clt": (
        {"dist": "twopoint:0.2:2:-0.5", "t": 1.0, "n_grid": [16, 32, 64, 128, 256, 512, 1024], "s_values": [3, 4, 5]},
        _suite_clt,
    ),
    "fd": ({"dist": "twopoint:0.2:2:-0.5", "t_values": [0.5, 1.0, 2.0], "max_total": 6, "step": 0.2, "accuracy": 8}, _suite_fd),
    "ks": ({"a_values": [0.5, 1.0, 1.5, 2.0], "mc_a": [1.0, 0.75], "n": 100, "reps": 10**6}, _suite_ks),
    "vonmises": ({"kernel": "canonical:0.4", "t_values": [0.25, 0.5], "n_values": [4, 6, 8], "max_R": 2}, _suite_vonmises),
    "sphere": ({"n_grid": [50, 100, 200, 400], "samples": 10**4}, _suite_sphere),
    "klartag-sodin": ({"dist": "twopoint:0.2:2:-0.5", "t": 1.0, "n_grid": [50, 100, 200, 400], "samples": 1000}, _suite_klartag_sodin),
    "mc": ({"dist": "rademacher", "t": 1.0, "n": 4, "reps": 10**6}, _suite_mc),
}


def _jsonable(x):
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def canonical_json(obj) -> str:
    """Sorted-key, whitespace-free JSON; floats use their round-trip repr."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=True)


def _sha(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


@dataclass
class SuiteReport:
    suite: str
    seed: int
    config: dict
    results: dict
    rows: list[tuple[str, int, float, float]]

    @property
    def manifest(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "config": self.config,
            "config_hash": _sha({"suite": self.suite, "seed": self.seed, "config": self.config}),
            "content_id": _sha(self.results),
        }

    def to_json(self) -> dict:
        return _jsonable({"manifest": self.manifest, "results": self.results})


def run_suite(name: str, config: dict | None = None, seed: int = 0, threads: int = 1) -> SuiteReport:
    """Run a named suite; ``config`` entries override the suite defaults."""
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    defaults, fn = SUITES[name]
    unknown = set(config or {}) - set(defaults)
    if unknown:
        raise ValueError(f"unknown config keys for suite {name!r}: {sorted(unknown)}")
    cfg = {**defaults, **(config or {})}
    results, rows = fn(cfg, seed, threads)
    return SuiteReport(name, seed, _jsonable(cfg), _jsonable(results), rows)


def rerun_manifest(manifest: dict, threads: int = 1) -> tuple[SuiteReport, bool]:
    """Re-run a manifest; the flag tells whether the content id matches."""
    for key in ("suite", "seed", "config", "content_id"):
        if key not in manifest:
            raise ValueError(f"manifest lacks {key!r}")
    report = run_suite(manifest["suite"], manifest["config"], int(manifest["seed"]), threads)
    return report, report.manifest["content_id"] == manifest["content_id"]


def write_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "n", "error", "stderr"])
        for name, n, err, se in rows:
            writer.writerow([name, n, repr(float(err)), repr(float(se))])
