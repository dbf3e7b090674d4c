"""Command-line entry point: simulate, reconstruct, benchmark, report."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import benchmark as bm
from .config import CONFIG_KEYS, load_config
from .di_regularizer import hybrid_estimate
from .errors import ConfigError, DegenerateDataError, SolverStallError, StructuralError
from .estimators import linear_inversion, mle_estimate
from .numerics import Prng, min_eigenvalue
from .scenario import design_for
from .simulation import (
    FORMAT_VERSION,
    STATE_KINDS,
    estimate_frequencies,
    make_test_state,
    read_counts_csv,
    sample_counts,
    target_vector,
    write_counts_csv,
    write_state_json,
)

log = logging.getLogger("ditomo")

# method name -> (estimator, required design kind or None for "from the CSV")
RECONSTRUCT_METHODS = {
    "lin": ("lin", None),
    "ml": ("ml", None),
    "hybrid": ("hybrid", "full"),
    "LIN_FULL": ("lin", "full"),
    "LIN_PARTIAL": ("lin", "partial"),
    "DD_ML_FULL": ("ml", "full"),
    "DD_ML_PARTIAL": ("ml", "partial"),
    "DI_DD_ML": ("hybrid", "full"),
}


def _add_config_flags(parser: argparse.ArgumentParser, prefixes: tuple[str, ...] | None = None) -> None:
    group = parser.add_argument_group("config overrides")
    for key in CONFIG_KEYS:
        if prefixes is None or key.startswith(prefixes):
            group.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="VALUE", default=None)


def _overrides(args: argparse.Namespace) -> dict:
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}


def cmd_simulate(args) -> int:
    rng = Prng(args.seed)
    design = design_for(args.design)
    counts = sample_counts(rng, make_test_state(args.state), design, args.n)
    write_counts_csv(counts, args.out)
    print(f"total counts: {counts.total}")
    return 0


def cmd_reconstruct(args) -> int:
    config = load_config(args.config, _overrides(args))
    counts = read_counts_csv(args.counts)
    estimator, required = RECONSTRUCT_METHODS[args.method]
    if required and counts.kind != required:
        raise StructuralError(f"method {args.method} needs {required}-design counts, got {counts.kind}")
    design = design_for(counts.kind)
    metrics = {"format_version": FORMAT_VERSION, "method": args.method, "design": counts.kind}
    start = time.perf_counter()
    if estimator == "lin":
        raw = linear_inversion(estimate_frequencies(counts, design), design)
        rho = raw.matrix
        metrics.update(final_kl=None, iterations=0, trace_deviation=raw.trace_deviation)
    elif estimator == "ml":
        freq = estimate_frequencies(counts, design)
        res = mle_estimate(freq, design, config.mle)
        rho = res.state
        metrics.update(final_kl=res.final_kl, iterations=res.iterations, converged=res.converged, clamped=freq.clamped)
    else:
        res = hybrid_estimate(counts, config.di, config.mle)
        rho = res.state
        reg = res.regularized
        metrics.update(
            final_kl=res.final_kl,
            iterations=res.iterations,
            converged=res.converged,
            di_final_kl=reg.final_kl,
            di_min_moment_eig=reg.min_moment_eig,
            di_barrier_t_final=reg.barrier_t_final,
        )
    metrics["min_eigenvalue"] = min_eigenvalue(rho)
    metrics["wall_time"] = time.perf_counter() - start
    if args.target:
        metrics["fidelity"] = bm.fidelity_pure(rho, target_vector(args.target))
        metrics["trace_dist_to_true"] = bm.trace_distance(rho, make_test_state(args.target))
    out = Path(args.out)
    write_state_json(rho, out)
    metrics_path = Path(args.metrics) if args.metrics else out.with_suffix(".metrics.json")
    metrics_path.write_text(json.dumps(metrics, indent=1))
    print(json.dumps({k: v for k, v in metrics.items() if k != "format_version"}))
    return 0


def cmd_benchmark(args) -> int:
    overrides = _overrides(args)
    if args.jobs is not None:
        overrides["benchmark.jobs"] = args.jobs
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    config = load_config(args.config, overrides)
    total = len(config.states) * config.runs

    def progress(done, n):
        if done == n or done % max(1, n // 20) == 0:
            log.info("benchmark: %d / %d runs", done, n)

    start = time.perf_counter()
    records, summary = bm.run_benchmark(config, progress)
    paths = bm.write_results(records, summary, config.output_dir)
    print(f"{total} runs, {len(records)} records in {time.perf_counter() - start:.1f} s")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def format_report(records) -> str:
    summary = bm.summarize(records)
    lines = [f"{'state':6} {'method':14} {'n':>5} {'mean F':>8} {'std':>7} {'median':>8} {'min':>8} {'max':>8} {'F>1':>4}"]
    for e in summary["entries"]:
        f = e["fidelity"]
        lines.append(
            f"{e['state']:6} {e['method']:14} {f['n']:5d} {f['mean']:8.4f} {f['std']:7.4f} "
            f"{f['median']:8.4f} {f['min']:8.4f} {f['max']:8.4f} {e['fidelity_above_one']:4d}"
        )
    if summary["pairing"]:
        lines.append("")
        lines.append("trace distance (||.||_1), hybrid DI/DD-ML vs DD-ML on identical counts")
        lines.append(f"{'state':6} {'med D(hyb,DD)':>14} {'med D(hyb,true)':>16} {'ratio':>8}")
        for kind, p in summary["pairing"].items():
            lines.append(
                f"{kind:6} {p['hybrid_vs_dd']['median']:14.3e} {p['hybrid_vs_true']['median']:16.3e} {p['median_ratio']:8.3f}"
            )
    return "\n".join(lines)


def cmd_report(args) -> int:
    records = bm.read_results(args.results)
    if not records:
        raise ValueError(f"{args.results} holds no records")
    print(format_report(records))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ditomo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a Poissonian count table")
    p.add_argument("--state", choices=STATE_KINDS, required=True)
    p.add_argument("--n", type=float, default=1000.0, help="mean total count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--design", choices=("full", "partial"), default="full")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="estimate a state from a count CSV")
    p.add_argument("--counts", required=True)
    p.add_argument("--method", choices=tuple(RECONSTRUCT_METHODS), required=True)
    p.add_argument("--out", required=True, help="state JSON path")
    p.add_argument("--metrics", help="metrics JSON path (default: next to --out)")
    p.add_argument("--target", choices=STATE_KINDS, help="report fidelity against this test state")
    p.add_argument("--config", help="key = value config file")
    _add_config_flags(p, ("mle.", "di."))
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("benchmark", help="run the five-method comparison")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--jobs", type=int, help="parallel workers (default: all cores)")
    p.add_argument("--output-dir", dest="output_dir")
    _add_config_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="summarize a results JSONL file")
    p.add_argument("--results", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, StructuralError, DegenerateDataError, SolverStallError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
