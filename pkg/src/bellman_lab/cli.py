"""Command line entry point: ``bellman-lab <subcommand> ...``.

Exit codes: 0 success, 1 numeric or sampling failure, 2 domain error,
3 invariant violation (including any upper-bound breach), 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bellman import BellmanQuery, closed_form, extremal, thresholds
from .errors import BellmanLabError, DomainError, InvariantViolation
from .maximal import distribution_curve, maximal_function
from .norms import conjugate_factor, equiv_norm, norm_comparison_check, quasi_norm
from .partition import StepFunction, build_tree
from .search import OPTIMIZERS, SearchConfig, maximize, verify_upper_bound

SCHEMA_PREFIX = "bellman-lab"
SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAILURE, EXIT_DOMAIN, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    """17 significant digits, '.' decimal; round-trips every double."""
    return format(float(x), ".17g")


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def document(kind: str, body: dict) -> str:
    doc = {"schema": f"{SCHEMA_PREFIX}/{kind}/v{SCHEMA_VERSION}", **body}
    return json.dumps(_finite(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Outputs:
    """Collects written files so the manifest can list them."""

    def __init__(self):
        self.paths: list[str] = []

    def write(self, path: str | None, text: str) -> None:
        if path is None or path == "-":
            sys.stdout.write(text)
            return
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.paths.append(str(path))


def write_manifest(args: argparse.Namespace, outputs: Outputs, elapsed: float) -> None:
    """Sidecar ``<file>.manifest.json`` next to every written file."""
    params = {k: v for k, v in vars(args).items() if k not in ("handler",)}
    manifest = {
        "subcommand": args.command,
        "parameters": params,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "outputs": outputs.paths,
        "wall_clock_seconds": elapsed,
    }
    text = document("manifest", manifest)
    for path in outputs.paths:
        with open(f"{path}.manifest.json", "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# argument groups


def _query_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--functional", choices=("B", "B1", "B2"), required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--f", type=float, required=True)
    p.add_argument("--F", type=float, required=True)


def _tree_args(p: argparse.ArgumentParser, depth: int) -> None:
    p.add_argument("--arity", type=int, default=2)
    p.add_argument("--depth", type=int, default=depth)


def _search_args(p: argparse.ArgumentParser, trials: int) -> None:
    _query_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _tree_args(p, 10)
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="coordinate_ascent")
    p.add_argument("--moves", type=int, default=50_000)
    p.add_argument("--emit-certificate", metavar="PATH")
    p.add_argument("--out", metavar="PATH")


def parse_grid(text: str) -> list[float]:
    """start:stop:step, start included, stop excluded."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise DomainError(f"lambda grid must be start:stop:step, got {text!r}") from None
    if not step > 0:
        raise DomainError(f"lambda grid step must be > 0, got {step}")
    count = max(0, math.ceil((stop - start) / step - 1e-9))
    grid = [start + i * step for i in range(count)]
    if not grid:
        raise DomainError(f"lambda grid {text!r} is empty")
    return grid


def _load_step(args) -> StepFunction:
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            return StepFunction.from_json(fh.read())
    if args.values is None:
        raise DomainError("give --input FILE or --values v1,v2,...")
    values = np.array([float(v) for v in args.values.split(",")])
    depth = round(math.log(values.size, args.arity)) if values.size > 1 else 0
    tree = build_tree(args.arity, depth)
    if tree.n_leaves != values.size:
        raise DomainError(f"{values.size} values is not a power of arity {args.arity}")
    return StepFunction(tree, values)


def _step_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", metavar="PATH", help="StepFunction JSON {arity, depth, values}")
    p.add_argument("--values", help="comma separated leaf values, left to right")
    p.add_argument("--arity", type=int, default=2)


# ---------------------------------------------------------------------------
# subcommands


def cmd_closed_form(args, out: Outputs) -> int:
    q = BellmanQuery(args.p, args.f, args.F, args.lam, args.functional)
    value, branch = closed_form(q)
    out.write(args.out, document("closed-form", {
        "query": q.to_dict(), "value": value, "branch": branch, "thresholds": thresholds(q),
    }))
    return EXIT_OK


def cmd_extremal(args, out: Outputs) -> int:
    q = BellmanQuery(args.p, args.f, args.F, args.lam, args.functional)
    recipe = extremal(q, build_tree(args.arity, args.depth))
    out.write(args.out, document("extremal", recipe.to_dict()))
    if args.csv:
        vals = recipe.step.leaf_values
        out.write(args.csv, csv_text(["leaf", "value"], ((i, float(v)) for i, v in enumerate(vals))))
    return EXIT_OK


def cmd_norms(args, out: Outputs) -> int:
    phi = _load_step(args)
    qn, en = quasi_norm(phi, args.p), equiv_norm(phi, args.p)
    check = norm_comparison_check(phi, args.p)
    out.write(args.out, document("norms", {
        "p": args.p,
        "k": conjugate_factor(args.p),
        "quasi_norm": qn.value,
        "quasi_norm_witness": qn.witness,
        "equiv_norm": en.value,
        "equiv_norm_witness": en.witness,
        "ratios": check["ratios"],
    }))
    return EXIT_OK


def cmd_maximal(args, out: Outputs) -> int:
    phi = _load_step(args)
    result = maximal_function(phi)
    out.write(args.out, csv_text(["lambda", "measure"], distribution_curve(result)))
    if args.leaf_values:
        rows = ((i, float(v)) for i, v in enumerate(result.values.leaf_values))
        out.write(args.leaf_values, csv_text(["leaf", "maximal"], rows))
    return EXIT_OK


def _config(args) -> SearchConfig:
    q = BellmanQuery(args.p, args.f, args.F, args.lam, args.functional)
    return SearchConfig(q, args.arity, args.depth, args.trials, args.seed, args.optimizer, moves=args.moves)


def _report(kind: str, config: SearchConfig, report, args, out: Outputs) -> int:
    out.write(args.out, document(kind, {"config": config.to_dict(), **report.to_dict()}))
    if args.emit_certificate:
        out.write(args.emit_certificate, report.certificate.to_json() + "\n")
    breaches = report.violations + report.stats.get("weak_type_violations", 0)
    return EXIT_INVARIANT if breaches else EXIT_OK


def cmd_verify_bound(args, out: Outputs) -> int:
    config = _config(args)
    return _report("verify-bound", config, verify_upper_bound(config), args, out)


def cmd_search(args, out: Outputs) -> int:
    config = _config(args)
    return _report("search", config, maximize(config), args, out)


def thread_cap() -> int:
    raw = os.environ.get("BELLMAN_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise DomainError(f"BELLMAN_LAB_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def sweep_point(q: BellmanQuery, arity: int, depth: int) -> dict:
    value, branch = closed_form(q)
    try:
        recipe = extremal(q, build_tree(arity, depth))
        achieved = recipe.achieved["distribution_at_lambda_slack"]
        construction = recipe.construction
    except BellmanLabError as exc:
        if isinstance(exc, InvariantViolation):
            raise
        achieved, construction = math.nan, "none"
    return {"lambda": q.lam, "closed_form": value, "achieved": achieved,
            "gap": value - achieved, "branch": branch, "construction": construction}


def run_sweep(p: float, f: float, F: float, functional: str, grid: list[float],
              arity: int, depth: int) -> list[dict]:
    queries = [BellmanQuery(p, f, F, lam, functional) for lam in grid]
    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(queries))) as pool:
        return list(pool.map(lambda q: sweep_point(q, arity, depth), queries))


def emit_plot_data(rows: list[dict], directory: str, out: Outputs) -> None:
    """Two CSVs for external plotting: (lambda, closed_form) and (lambda, achieved)."""
    if not rows:
        raise DomainError("empty sweep, nothing to plot")
    base = Path(directory)
    for col in ("closed_form", "achieved"):
        out.write(str(base / f"{col}.csv"), csv_text(["lambda", col], ((r["lambda"], r[col]) for r in rows)))


def cmd_sweep(args, out: Outputs) -> int:
    grid = parse_grid(args.lambda_grid)
    BellmanQuery(args.p, args.f, args.F, grid[0], args.functional)
    rows = run_sweep(args.p, args.f, args.F, args.functional, grid, args.arity, args.depth)
    header = ["lambda", "closed_form", "achieved", "gap", "branch", "construction"]
    out.write(args.out, csv_text(header, ([r[h] for h in header] for r in rows)))
    if args.plot_dir:
        emit_plot_data(rows, args.plot_dir, out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bellman-lab", description="Bellman functions for tree maximal operators.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("closed-form", help="closed-form value and active branch")
    _query_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(handler=cmd_closed_form)

    p = sub.add_parser("extremal", help="discretized extremal function and its metrics")
    _query_args(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _tree_args(p, 12)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--csv", metavar="PATH", help="dump leaf values")
    p.set_defaults(handler=cmd_extremal)

    p = sub.add_parser("norms", help="weak-L^p quasi-norm and equivalent norm of a step function")
    _step_args(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(handler=cmd_norms)

    p = sub.add_parser("maximal", help="distribution curve of the tree maximal function")
    _step_args(p)
    p.add_argument("--out", metavar="PATH", help="curve CSV (lambda, measure)")
    p.add_argument("--leaf-values", metavar="PATH", help="maximal function leaf values CSV")
    p.set_defaults(handler=cmd_maximal)

    p = sub.add_parser("verify-bound", help="random feasible samples against the closed form")
    _search_args(p, trials=10_000)
    p.set_defaults(handler=cmd_verify_bound)

    p = sub.add_parser("search", help="local search toward the closed form from below")
    _search_args(p, trials=1000)
    p.set_defaults(handler=cmd_search)

    p = sub.add_parser("sweep", help="closed form and achieved value over a lambda grid")
    _query_args(p)
    p.add_argument("--lambda-grid", required=True, metavar="START:STOP:STEP")
    _tree_args(p, 12)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--plot-dir", metavar="DIR", help="write closed_form.csv and achieved.csv here")
    p.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    out = Outputs()
    start = time.perf_counter()
    try:
        code = args.handler(args, out)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except InvariantViolation as exc:
        print(f"invariant violation: {exc} {exc.details}", file=sys.stderr)
        return EXIT_INVARIANT
    except BellmanLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    write_manifest(args, out, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
