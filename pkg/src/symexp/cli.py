"""Command-line entry point ``symexp``.

Exit codes: 0 on success, 1 on usage errors (bad flags, unreadable or
malformed inputs), 2 when a numeric or mathematical contract fails (weights
off the unit sphere, enumeration budget exceeded, a manifest that no longer
reproduces).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .engine import expand
from .errors import ContractError
from .harness import SUITES, ModelSpec, canonical_json, mc_estimate, rerun_manifest, run_suite, run_sphere_experiment, write_csv
from .model_clt import CltProvider, exact_char_product, parse_distribution
from .model_ks import KsModel, KsProvider, ks_expansion, mc_ks_exceedance
from .model_vonmises import VonMisesModel, exact_small_n_charfn, load_kernel, vonmises_expand
from .opalgebra import cumulant_operator, edgeworth_polynomial, tilde_polynomial
from .weights import parse_weights

__all__ = ["main", "run", "build_parser"]

THREADS_ENV = "SYMEXP_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError(f"{THREADS_ENV} must be >= 1")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("clt", "vonmises", "ks"), required=True)
    p.add_argument("--weights", default="equal:100", help="equal:n | file:<path> | sphere:n:seed:index")
    p.add_argument("--t", type=float, default=1.0, help="characteristic-function argument")
    p.add_argument("--dist", default="twopoint:0.2:2:-0.5", help="rademacher | uniform | twopoint:p:xp:xm | moments:b3:b4:...")
    p.add_argument("--kernel", default="canonical", help="canonical[:q] | file:<path>")
    p.add_argument("--a", type=float, default=1.0, help="KS threshold")
    p.add_argument("--reps", type=_positive_int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--json", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="symexp", description="Edgeworth-type expansions of symmetric function sequences.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("algebra", help="print cumulant operators and Edgeworth polynomials")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--kappa", type=int, metavar="P")
    group.add_argument("--edgeworth", type=int, metavar="R")
    group.add_argument("--tilde", type=int, metavar="J")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("expand", help="evaluate the expansion for a model and weight vector")
    _model_flags(p)
    p.add_argument("--s", type=int, required=True)

    p = sub.add_parser("oracle", help="exact or Monte Carlo reference value")
    _model_flags(p)
    p.add_argument("--mc", action="store_true", help="use Monte Carlo even when an exact oracle exists")

    p = sub.add_parser("verify", help="run a named verification suite or re-run a manifest")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--suite", choices=sorted(SUITES))
    group.add_argument("--manifest", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON object overriding suite defaults")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--out", type=Path, help="write the JSON report here")
    p.add_argument("--csv", type=Path, help="write n, error, stderr rows here")

    p = sub.add_parser("sphere", help="power sums of uniform sphere samples")
    p.add_argument("--n", type=_positive_int, nargs="+", default=[50, 100, 200, 400])
    p.add_argument("--samples", type=_positive_int, default=10**4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--json", action="store_true")
    return parser


def _complex_json(z: complex) -> dict:
    return {"re": z.real, "im": z.imag}


def _fmt(z: complex) -> str:
    return f"{z.real:.12g}{z.imag:+.12g}i"


def _cmd_algebra(args, out) -> int:
    if args.kappa is not None:
        poly = cumulant_operator(args.kappa)
    elif args.edgeworth is not None:
        poly = edgeworth_polynomial(args.edgeworth)
    else:
        poly = tilde_polynomial(args.tilde)
    out.write((json.dumps(poly.to_json()) if args.json else poly.to_text()) + "\n")
    return 0


def _cmd_expand(args, out, threads: int) -> int:
    w = parse_weights(args.weights)
    if args.model == "clt":
        result = expand(CltProvider(parse_distribution(args.dist, args.t)), w, args.s, threads=threads)
    elif args.model == "vonmises":
        result = vonmises_expand(VonMisesModel(load_kernel(args.kernel), args.t), w, args.s, threads=threads)
    else:
        result = expand(KsProvider(KsModel(args.a)), w, args.s, threads=threads)
    if args.json:
        out.write(json.dumps(result.to_json()) + "\n")
    else:
        out.write(f"leading: {_fmt(result.leading)}\n")
        for order, value in result.terms:
            out.write(f"order {order}: {_fmt(value)}\n")
        out.write(f"total: {_fmt(result.total())}\nremainder scale |eps|^{args.s}: {result.remainder_scale:.6g}\n")
    return 0


def _cmd_oracle(args, out, threads: int) -> int:
    w = parse_weights(args.weights)
    if args.model == "ks":
        m = KsModel(args.a, reps=args.reps, seed=args.seed)
        estimate, stderr = mc_ks_exceedance(m, w, threads=threads)
        payload = {"estimate": estimate, "stderr": stderr, "expansion": ks_expansion(m, w), "leading": m.leading}
    elif args.mc:
        spec = ModelSpec(args.model, t=args.t, dist=args.dist, kernel=args.kernel)
        mean, se = mc_estimate(spec, w, args.reps, args.seed, threads)
        payload = {"estimate": _complex_json(mean), "stderr": _complex_json(se), "method": "monte-carlo"}
    elif args.model == "clt":
        payload = {"value": _complex_json(exact_char_product(parse_distribution(args.dist, args.t), w)), "method": "exact"}
    else:
        value = exact_small_n_charfn(VonMisesModel(load_kernel(args.kernel), args.t), w)
        payload = {"value": _complex_json(value), "method": "exact"}
    if args.json:
        out.write(json.dumps(payload) + "\n")
    else:
        for key, value in payload.items():
            out.write(f"{key}: {_fmt(complex(value['re'], value['im'])) if isinstance(value, dict) else value}\n")
    return 0


def _cmd_verify(args, out, threads: int) -> int:
    if args.manifest is not None:
        manifest = json.loads(args.manifest.read_text(encoding="utf-8"))
        manifest = manifest.get("manifest", manifest)
        report, same = rerun_manifest(manifest, threads)
    else:
        config = json.loads(args.config) if args.config else None
        if config is not None and not isinstance(config, dict):
            raise UsageError("--config must be a JSON object")
        report, same = run_suite(args.suite, config, args.seed, threads), True
    text = canonical_json(report.to_json())
    if args.out:
        args.out.write_text(text + "\n", encoding="utf-8")
    if args.csv:
        write_csv(args.csv, report.rows)
    manifest = report.manifest
    out.write(f"suite {manifest['suite']} seed {manifest['seed']} content_id {manifest['content_id']}\n")
    if not same:
        raise ContractError("re-run does not reproduce the manifest's content id")
    return 0


def _cmd_sphere(args, out, threads: int) -> int:
    table = run_sphere_experiment(args.n, args.samples, args.seed, threads)
    if args.json:
        out.write(canonical_json(table.to_json()) + "\n")
        return 0
    out.write("n median|e3| p90|e3| median_e4 p90_e4 mean_e4 3/(n+2)\n")
    for r in table.rows:
        out.write(
            f"{r['n']} {r['median_abs_e3']:.6g} {r['p90_abs_e3']:.6g} {r['median_e4']:.6g} "
            f"{r['p90_e4']:.6g} {r['mean_e4']:.6g} {r['expected_mean_e4']:.6g}\n"
        )
    out.write(f"slopes: median|e3| {table.slope_abs_e3:.4f}, median e4 {table.slope_e4:.4f}\n")
    return 0


def run(argv=None, out=None, err=None) -> int:
    """Parse ``argv`` and execute; returns the exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        threads = getattr(args, "threads", None) or _default_threads()
        if args.command == "algebra":
            return _cmd_algebra(args, out)
        if args.command == "expand":
            return _cmd_expand(args, out, threads)
        if args.command == "oracle":
            return _cmd_oracle(args, out, threads)
        if args.command == "verify":
            return _cmd_verify(args, out, threads)
        return _cmd_sphere(args, out, threads)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return 1
    except ContractError as exc:
        err.write(f"error: {exc}\n")
        return 2
    except (ValueError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
