"""Command-line entry point: ``vmfexp {simulate,realdata,bench,diversity}``.

Exit codes: 0 on success, 2 for invalid arguments, 3 for I/O failures and 4
when an internal consistency check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .data import DEFAULT_PROBE_BUDGET, center_and_normalize, read_embeddings
from .errors import DegenerateSetError, DomainError, NotFoundError, ParseError
from .experiments import (
    BENCH_COLUMNS,
    DEFAULT_DOT_GRID,
    DIVERSITY_COLUMNS,
    REALDATA_COLUMNS,
    run_bench,
    run_diversity,
    run_realdata,
)
from .index import EmbeddingSet
from .montecarlo import DEFAULT_N_GRID, GRID_COLUMNS, ExperimentSpec, run_grid
from .sphere import RandomSource, uniform_sphere_batch

__all__ = ["main", "build_parser", "format_rows"]

log = logging.getLogger("vmfexp")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INTERNAL = 4

FAST_TRIALS = 100_000
FAST_SETS = 100


class UsageError(Exception):
    """Bad command-line input detected after argument parsing."""


def _count(text: str) -> int:
    """Parse a positive integer, accepting forms like ``1e5``."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value) or value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


def _count_list(text: str) -> tuple[int, ...]:
    items = [t for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")
    return tuple(_count(t.strip()) for t in items)


def _float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=0, help="root random seed (default 0)")
    p.add_argument("--output", default="-", help="output file, '-' for stdout (default)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format (default csv)")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmfexp",
        description="vMF exploration versus Boltzmann exploration: simulations, real-data study, "
                    "throughput benchmark and playlist diversity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo grid over n on uniform embeddings")
    sim.add_argument("--d", type=int, required=True, help="embedding dimension (>= 2)")
    sim.add_argument("--kappa", type=float, required=True, help="concentration (>= 0)")
    sim.add_argument("--dot-va", type=float, required=True, help="inner product of state and anchor")
    sim.add_argument("--n-grid", type=_count_list, default=DEFAULT_N_GRID,
                     help="comma-separated set sizes (default 1e3,3e3,1e4,3e4,1e5)")
    sim.add_argument("--trials", type=_count, default=None, help="vMF-exp draws per grid point (default 8e6)")
    sim.add_argument("--resample-sets", type=_count, default=None,
                     help="embedding sets per grid point (default 1000)")
    sim.add_argument("--workers", type=_count, default=1, help="worker processes (default 1)")
    sim.add_argument("--fast", action="store_true",
                     help=f"quick run: {FAST_TRIALS} draws over {FAST_SETS} sets per point")
    _common(sim)

    real = sub.add_parser("realdata", help="selection frequencies on a real embedding file")
    real.add_argument("--embeddings", required=True, help="text embedding file or binary snapshot")
    real.add_argument("--limit", type=_count, default=None, help="read at most this many vectors")
    real.add_argument("--kappa", type=float, default=1.0, help="concentration (default 1)")
    real.add_argument("--n-grid", type=_count_list, default=(20_000, 40_000, 60_000, 80_000, 100_000),
                      help="comma-separated subset sizes")
    real.add_argument("--target-dot", type=_float_list, default=DEFAULT_DOT_GRID,
                      help="comma-separated target inner products (default 0.9,0.3,0,-0.3,-0.9)")
    real.add_argument("--dot-tolerance", type=float, default=0.01, help="pair search tolerance (default 0.01)")
    real.add_argument("--probe-budget", type=_count, default=DEFAULT_PROBE_BUDGET,
                      help="pair probes before giving up (default 1e7)")
    real.add_argument("--trials", type=_count, default=1_000_000, help="vMF-exp draws per point (default 1e6)")
    real.add_argument("--resample-sets", type=_count, default=100, help="subsets per point (default 100)")
    real.add_argument("--workers", type=_count, default=1, help="accepted for symmetry; runs in-process")
    _common(real)

    bench = sub.add_parser("bench", help="draws per second of B-exp and vMF-exp")
    bench.add_argument("--n-grid", type=_count_list, default=(100_000, 1_000_000), help="set sizes")
    bench.add_argument("--d", type=int, default=25, help="embedding dimension (default 25)")
    bench.add_argument("--kappa", type=float, default=1.0, help="concentration (default 1)")
    bench.add_argument("--clusters", type=_count, default=None, help="IVF lists (default about 4 sqrt(n))")
    bench.add_argument("--probes", type=_count, default=None,
                       help="IVF lists scanned per query (default: fewest reaching recall@10 0.9)")
    bench.add_argument("--workers", type=_count, default=1, help="accepted for symmetry; timing is single-process")
    _common(bench)

    div = sub.add_parser("diversity", help="Jaccard similarity of repeated playlists")
    div.add_argument("--embeddings", default=None, help="embedding file (default: uniform synthetic set)")
    div.add_argument("--limit", type=_count, default=None, help="read at most this many vectors")
    div.add_argument("--n", type=_count, default=100_000, help="synthetic set size (default 1e5)")
    div.add_argument("--d", type=int, default=25, help="synthetic dimension (default 25)")
    div.add_argument("--kappa", type=float, default=10.0, help="concentration for both policies (default 10)")
    div.add_argument("--m", type=_count, default=500, help="truncation size (default 500)")
    div.add_argument("--length", type=_count, default=40, help="playlist length (default 40)")
    div.add_argument("--repetitions", type=_count, default=10, help="playlists per seed action (default 10)")
    div.add_argument("--seed-actions", type=_count, default=50, help="seed actions (default 50)")
    _common(div)
    return parser


# ---------------------------------------------------------------------------
# output


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def format_rows(rows: Sequence[dict[str, Any]], columns: Sequence[str], fmt: str) -> str:
    """Render rows as RFC 4180 CSV with LF line ends, or as a JSON array of objects."""
    if fmt == "json":
        payload = [{col: _json_value(row.get(col)) for col in columns} for row in rows]
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(col)) for col in columns])
    return buf.getvalue()


def _emit(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    Path(output).write_text(text, encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# commands


def _check_kappa(kappa: float) -> None:
    if not (math.isfinite(kappa) and kappa >= 0.0):
        raise UsageError(f"--kappa must be finite and >= 0, got {kappa}")


def _check_d(d: int) -> None:
    if d < 2:
        raise UsageError(f"--d must be >= 2, got {d}")


def cmd_simulate(args: argparse.Namespace) -> tuple[list[dict[str, Any]], Sequence[str]]:
    _check_d(args.d)
    _check_kappa(args.kappa)
    if not -1.0 <= args.dot_va <= 1.0:
        raise UsageError(f"--dot-va must lie in [-1, 1], got {args.dot_va}")
    trials = args.trials if args.trials is not None else (FAST_TRIALS if args.fast else 8_000_000)
    sets = args.resample_sets if args.resample_sets is not None else (FAST_SETS if args.fast else 1_000)
    spec = ExperimentSpec(d=args.d, kappa=args.kappa, dot_va=args.dot_va, n_grid=args.n_grid,
                          trials=trials, resample_sets=sets, seed=args.seed)
    return run_grid(spec, workers=args.workers), GRID_COLUMNS


def _load_normalized(path: str, limit: int | None) -> EmbeddingSet:
    if not Path(path).is_file():
        raise UsageError(f"embedding file not found: {path}")
    raw, report = read_embeddings(path, limit)
    log.info("read %d vectors of dimension %d from %s (%d malformed, %d duplicate lines skipped)",
             raw.n, raw.d, path, report.malformed, report.duplicates)
    return center_and_normalize(raw)


def cmd_realdata(args: argparse.Namespace) -> tuple[list[dict[str, Any]], Sequence[str]]:
    _check_kappa(args.kappa)
    if not (args.dot_tolerance > 0 and math.isfinite(args.dot_tolerance)):
        raise UsageError("--dot-tolerance must be positive")
    if any(not -1.0 <= t <= 1.0 for t in args.target_dot):
        raise UsageError("--target-dot values must lie in [-1, 1]")
    emb = _load_normalized(args.embeddings, args.limit)
    if max(args.n_grid) > emb.n - 2:
        raise UsageError(f"--n-grid values must be at most {emb.n - 2} for this file")
    rows = run_realdata(emb, args.n_grid, args.target_dot, args.kappa, trials=args.trials,
                        resample_sets=args.resample_sets, seed=args.seed, tolerance=args.dot_tolerance,
                        probe_budget=args.probe_budget)
    return rows, REALDATA_COLUMNS


def cmd_bench(args: argparse.Namespace) -> tuple[list[dict[str, Any]], Sequence[str]]:
    _check_d(args.d)
    _check_kappa(args.kappa)
    for n in args.n_grid:
        if args.clusters is not None and args.clusters > n:
            raise UsageError(f"--clusters must not exceed n ({n})")
    if args.probes is not None and args.clusters is not None and args.probes > args.clusters:
        raise UsageError("--probes must not exceed --clusters")
    rows = run_bench(args.n_grid, args.d, args.kappa, seed=args.seed, clusters=args.clusters, probes=args.probes)
    return rows, BENCH_COLUMNS


def cmd_diversity(args: argparse.Namespace) -> tuple[list[dict[str, Any]], Sequence[str]]:
    _check_kappa(args.kappa)
    if args.repetitions < 2:
        raise UsageError("--repetitions must be >= 2")
    if args.length > args.m:
        raise UsageError("--length must not exceed --m")
    if args.embeddings is not None:
        emb = _load_normalized(args.embeddings, args.limit)
    else:
        _check_d(args.d)
        gen = RandomSource(args.seed, 15).generator
        emb = EmbeddingSet(uniform_sphere_batch(args.d, args.n, gen), check_unit=False)
    if args.m > emb.n or args.seed_actions > emb.n:
        raise UsageError(f"--m and --seed-actions must not exceed the set size ({emb.n})")
    rows = run_diversity(emb, args.kappa, args.m, args.length, args.repetitions, args.seed_actions,
                         seed=args.seed)
    return rows, DIVERSITY_COLUMNS


_COMMANDS = {
    "simulate": cmd_simulate,
    "realdata": cmd_realdata,
    "bench": cmd_bench,
    "diversity": cmd_diversity,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.output != "-" and not Path(args.output).resolve().parent.is_dir():
        print(f"vmfexp {args.command}: I/O error: no directory for {args.output}", file=sys.stderr)
        return EXIT_IO
    try:
        rows, columns = _COMMANDS[args.command](args)
        _emit(format_rows(rows, columns, args.format), args.output)
    except (UsageError, DomainError, ParseError, DegenerateSetError, NotFoundError) as exc:
        print(f"vmfexp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"vmfexp {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # anything else means an internal check failed
        print(f"vmfexp {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
