"""Monte-Carlo comparison of the five reconstruction methods."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import METHODS, BenchmarkConfig, MleConfig, SolverConfig, config_to_dict
from .di_regularizer import hybrid_from_joint
from .errors import DegenerateDataError, StructuralError
from .estimators import linear_inversion, mle_estimate
from .numerics import Prng, derive_seed, min_eigenvalue, trace_norm
from .scenario import full_design, partial_design
from .simulation import (
    FORMAT_VERSION,
    STATE_KINDS,
    FrequencyVector,
    estimate_frequencies,
    make_test_state,
    sample_counts,
    setting_totals,
    target_vector,
)

log = logging.getLogger(__name__)

HIST_BINS = 50
MAX_RESAMPLES = 1000
ML_METHODS = ("DD_ML_PARTIAL", "DD_ML_FULL", "DI_DD_ML")
TRACE_DISTANCE_CONVENTION = "||rho1 - rho2||_1 (sum of |eigenvalues|, no 1/2 factor)"


def fidelity_pure(rho_hat: np.ndarray, target: np.ndarray) -> float:
    """<psi| rho_hat |psi> for a normalized pure target."""
    target = np.asarray(target, dtype=np.complex128)
    if abs(np.linalg.norm(target) - 1.0) > 1e-10:
        raise ValueError("target state vector is not normalized")
    value = np.vdot(target, np.asarray(rho_hat) @ target)
    if abs(value.imag) > 1e-10:
        raise StructuralError("estimate is not Hermitian: fidelity has an imaginary part")
    return float(value.real)


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    return trace_norm(np.asarray(rho1) - np.asarray(rho2))


@dataclass
class RunRecord:
    state_kind: str
    method: str
    run_index: int
    seed: int
    fidelity: float
    trace_dist_to_true: float
    min_eigenvalue: float
    iterations: int
    final_kl: float | None
    clamp_events: int
    resamples: int
    converged: bool
    trace_dist_hybrid_vs_dd: float | None = None
    di_final_kl: float | None = None
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps({"format_version": FORMAT_VERSION, **asdict(self)})


def evaluate_methods(
    kind: str,
    full_freq: np.ndarray,
    partial_freq: FrequencyVector,
    methods=METHODS,
    mle: MleConfig | None = None,
    solver: SolverConfig | None = None,
) -> dict[str, dict]:
    """Apply each method to one run's data; returns per-method result fields."""
    truth = make_test_state(kind)
    target = target_vector(kind)
    out = {}
    states = {}
    for method in methods:
        start = time.perf_counter()
        clamp = 0
        info = {"iterations": 0, "final_kl": None, "converged": True}
        if method == "LIN_FULL":
            rho = linear_inversion(full_freq, full_design()).matrix
        elif method == "LIN_PARTIAL":
            rho = linear_inversion(partial_freq, partial_design()).matrix
            clamp = int(partial_freq.clamped)
        else:
            if method == "DD_ML_FULL":
                res = mle_estimate(full_freq, full_design(), mle)
            elif method == "DD_ML_PARTIAL":
                res = mle_estimate(partial_freq, partial_design(), mle)
                clamp = int(partial_freq.clamped)
            elif method == "DI_DD_ML":
                res = hybrid_from_joint(full_freq, solver, mle)
                info["di_final_kl"] = res.regularized.final_kl
            else:
                raise StructuralError(f"unknown method {method!r}")
            rho = res.state
            info.update(iterations=res.iterations, final_kl=res.final_kl, converged=res.converged)
        states[method] = rho
        out[method] = {
            "fidelity": fidelity_pure(rho, target),
            "trace_dist_to_true": trace_distance(rho, truth),
            "min_eigenvalue": min_eigenvalue(rho),
            "clamp_events": clamp,
            "wall_time": time.perf_counter() - start,
            **info,
        }
    if "DI_DD_ML" in states and "DD_ML_FULL" in states:
        d = trace_distance(states["DI_DD_ML"], states["DD_ML_FULL"])
        out["DI_DD_ML"]["trace_dist_hybrid_vs_dd"] = d
        out["DD_ML_FULL"]["trace_dist_hybrid_vs_dd"] = d
    return out


def run_seed(master_seed: int, kind: str, run_index: int) -> int:
    return derive_seed(derive_seed(master_seed, STATE_KINDS.index(kind)), run_index)


def _draw(kind: str, seed: int, n_samples: float):
    """Sample full and partial counts, resampling runs with degenerate data."""
    rho = make_test_state(kind)
    for attempt in range(MAX_RESAMPLES):
        rng = Prng(seed if attempt == 0 else derive_seed(seed, attempt))
        full = sample_counts(rng, rho, full_design(), n_samples)
        partial = sample_counts(rng, rho, partial_design(), n_samples)
        if np.any(setting_totals(full.counts) == 0):
            continue
        try:
            partial_freq = estimate_frequencies(partial, partial_design())
        except DegenerateDataError:
            continue
        return full, partial_freq, attempt
    raise DegenerateDataError(f"no usable data after {MAX_RESAMPLES} resamples")


def run_single(config: BenchmarkConfig, kind: str, run_index: int) -> list[RunRecord]:
    seed = run_seed(config.master_seed, kind, run_index)
    full, partial_freq, resamples = _draw(kind, seed, config.n_samples)
    if resamples:
        log.info("%s run %d: resampled %d time(s)", kind, run_index, resamples)
    full_freq = full.counts / full.total
    results = evaluate_methods(kind, full_freq, partial_freq, config.methods, config.mle, config.di)
    return [
        RunRecord(
            state_kind=kind,
            method=m,
            run_index=run_index,
            seed=seed,
            resamples=resamples,
            **results[m],
        )
        for m in config.methods
    ]


def _work(args):
    config, kind, run_index = args
    return run_single(config, kind, run_index)


def run_benchmark(config: BenchmarkConfig, progress=None) -> tuple[list[RunRecord], dict]:
    items = [(config, kind, r) for kind in config.states for r in range(config.runs)]
    records: list[RunRecord] = []
    workers = min(config.worker_count, len(items))
    if workers <= 1:
        for i, item in enumerate(items):
            records.extend(_work(item))
            if progress:
                progress(i + 1, len(items))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, recs in enumerate(pool.map(_work, items, chunksize=4)):
                records.extend(recs)
                if progress:
                    progress(i + 1, len(items))
    return records, summarize(records, config)


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "min": float(v.min()),
        "max": float(v.max()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
    }


def summarize(records: list[RunRecord], config: BenchmarkConfig | None = None) -> dict:
    if not records:
        raise ValueError("no records to summarize")
    by_key: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        by_key.setdefault((rec.state_kind, rec.method), []).append(rec)
    entries = []
    for (kind, method), recs in by_key.items():
        fids = [r.fidelity for r in recs]
        entries.append(
            {
                "state": kind,
                "method": method,
                "fidelity": _stats(fids),
                "trace_dist_to_true": _stats([r.trace_dist_to_true for r in recs]),
                "fidelity_above_one": int(sum(f > 1.0 for f in fids)),
                "negative_eigenvalue_runs": int(sum(r.min_eigenvalue < -1e-10 for r in recs)),
                "clamp_events": int(sum(r.clamp_events for r in recs)),
                "resampled_runs": int(sum(r.resamples > 0 for r in recs)),
                "unconverged": int(sum(not r.converged for r in recs)),
            }
        )
    pairing = {}
    for kind in dict.fromkeys(r.state_kind for r in records):
        hyb = [r for r in by_key.get((kind, "DI_DD_ML"), []) if r.trace_dist_hybrid_vs_dd is not None]
        if not hyb:
            continue
        dd = {r.run_index: r for r in by_key.get((kind, "DD_ML_FULL"), [])}
        between = [r.trace_dist_hybrid_vs_dd for r in hyb]
        to_true = [r.trace_dist_to_true for r in hyb]
        pairing[kind] = {
            "hybrid_vs_dd": _stats(between),
            "hybrid_vs_true": _stats(to_true),
            "dd_vs_true": _stats([dd[r.run_index].trace_dist_to_true for r in hyb]),
            "median_ratio": float(np.median(between) / np.median(to_true)),
        }
    summary = {
        "format_version": FORMAT_VERSION,
        "trace_distance_convention": TRACE_DISTANCE_CONVENTION,
        "di_kl_weighting": "empirical input frequencies f(xy)",
        "entries": entries,
        "pairing": pairing,
    }
    if config is not None:
        # where and how parallel the run executed does not affect results
        skip = ("benchmark.jobs", "output_dir")
        summary["config"] = {k: v for k, v in config_to_dict(config).items() if k not in skip}
    return summary


def histograms(records: list[RunRecord], bins: int = HIST_BINS) -> list[tuple]:
    """(state, method, bin_lo, bin_hi, count) rows over each observed fidelity range."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        groups.setdefault((rec.state_kind, rec.method), []).append(rec.fidelity)
    rows = []
    for (kind, method), values in groups.items():
        counts, edges = np.histogram(values, bins=bins)
        rows += [(kind, method, float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    return rows


def write_results(records: list[RunRecord], summary: dict, output_dir) -> dict[str, Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "results": out / "results.jsonl",
        "summary": out / "summary.json",
        "histograms": out / "histograms.csv",
    }
    with paths["results"].open("w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    paths["summary"].write_text(json.dumps(summary, indent=1))
    with paths["histograms"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "method", "bin_lo", "bin_hi", "count"])
        w.writerows(histograms(records))
    return paths


def read_results(path) -> list[RunRecord]:
    records = []
    fields = set(RunRecord.__dataclass_fields__)
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                records.append(RunRecord(**{k: v for k, v in obj.items() if k in fields}))
    return records
