"""Test states, Born probabilities, Poissonian count sampling and frequency estimates."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, StructuralError
from .numerics import Prng, is_hermitian, min_eigenvalue
from .scenario import COMPLEMENT, SETTINGS, TomographyDesign, design_for, full_labels, partial_labels

FORMAT_VERSION = 1

STATE_KINDS = ("tau1", "tau2", "tau3")
NOISE_LAMBDA = {"tau1": 0.52, "tau2": 0.995, "tau3": 0.995}
PARTIAL_ALPHA, PARTIAL_BETA = 0.961, 0.276


def max_entangled() -> np.ndarray:
    """(|00> + |11>) / sqrt(2)."""
    return np.array([1, 0, 0, 1], dtype=np.complex128) / np.sqrt(2)


def partially_entangled() -> np.ndarray:
    v = np.array([PARTIAL_ALPHA, 0, 0, PARTIAL_BETA], dtype=np.complex128)
    return v / np.linalg.norm(v)


def target_vector(kind: str) -> np.ndarray:
    """Pure state the fidelity of ``kind`` is measured against."""
    if kind not in STATE_KINDS:
        raise StructuralError(f"unknown state kind {kind!r}")
    return partially_entangled() if kind == "tau3" else max_entangled()


def make_test_state(kind: str) -> np.ndarray:
    chi = target_vector(kind)
    lam = NOISE_LAMBDA[kind]
    return lam * np.outer(chi, chi.conj()) + (1 - lam) / 4 * np.eye(4)


def check_density_matrix(rho: np.ndarray, psd_tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape != (4, 4) or not is_hermitian(rho):
        raise StructuralError("density matrix must be a 4x4 Hermitian matrix")
    if abs(np.trace(rho).real - 1) > 1e-12:
        raise StructuralError("density matrix must have unit trace")
    if min_eigenvalue(rho) < -psd_tol:
        raise StructuralError("density matrix is not positive semidefinite")
    return rho


def born_probabilities(rho: np.ndarray, design: TomographyDesign) -> np.ndarray:
    """P_mu = tr(M_mu rho)."""
    return np.einsum("mij,ji->m", design.elements, rho).real


@dataclass(frozen=True, eq=False)
class CountTable:
    kind: str  # "full" or "partial"
    labels: tuple
    counts: np.ndarray  # int64, aligned with labels

    def __post_init__(self):
        expected = tuple(full_labels() if self.kind == "full" else partial_labels())
        if tuple(self.labels) != expected:
            raise StructuralError(f"labels do not match the {self.kind} design")
        if len(self.counts) != len(expected) or np.any(np.asarray(self.counts) < 0):
            raise StructuralError("counts must be non-negative and aligned with labels")

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))

    def as_dict(self) -> dict:
        return {lab: int(c) for lab, c in zip(self.labels, self.counts)}


@dataclass(frozen=True, eq=False)
class FrequencyVector:
    frequencies: np.ndarray  # aligned with the design's POVM order
    total_estimate: float
    clamped: bool = False


def sample_counts(rng: Prng, rho: np.ndarray, design: TomographyDesign, mean_total: float) -> CountTable:
    """One independent Poisson draw per observed event, mean ``mean_total * P``."""
    if mean_total <= 0:
        raise ValueError("mean total count must be positive")
    probs = born_probabilities(rho, design)
    observed = [i for i, lab in enumerate(design.labels) if lab != COMPLEMENT]
    means = mean_total * np.clip(probs[observed], 0.0, None)
    counts = rng.poisson_many(means)
    return CountTable(design.kind, design.observed_labels, counts)


def estimate_frequencies(counts: CountTable, design: TomographyDesign | None = None) -> FrequencyVector:
    design = design or design_for(counts.kind)
    if design.kind != counts.kind:
        raise StructuralError("count table does not match the design kind")
    n = np.asarray(counts.counts, dtype=float)
    if design.kind == "full":
        total = n.sum()
        if total <= 0:
            raise DegenerateDataError("total count is zero")
        return FrequencyVector(n / total, float(total))
    subset = design.subset
    j_idx = [counts.labels.index(lab) for lab in subset.normalization]
    n_hat = n[j_idx].sum() / subset.alpha
    if n_hat <= 0:
        raise DegenerateDataError("normalization subset has no counts")
    f = n / n_hat
    f_c = 1.0 - f.sum()
    clamped = f_c < 0
    freqs = np.append(f, max(f_c, 0.0))
    if clamped:
        freqs = freqs / freqs.sum()
    return FrequencyVector(freqs, float(n_hat), bool(clamped))


def setting_totals(joint: np.ndarray) -> np.ndarray:
    """Sum over outcomes of a 36-vector in the canonical order -> (3, 3) table."""
    return np.asarray(joint, dtype=float).reshape(3, 3, 4).sum(axis=2)


def conditional_from_joint(joint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(f(ab|xy) as a 36-vector, f(xy) as a (3, 3) table) from joint weights."""
    joint = np.asarray(joint, dtype=float)
    per_setting = setting_totals(joint)
    if np.any(per_setting <= 0):
        raise DegenerateDataError("some setting pair (x, y) has no events")
    cond = (joint.reshape(3, 3, 4) / per_setting[:, :, None]).reshape(36)
    return cond, per_setting / per_setting.sum()


def conditional_frequencies(counts: CountTable) -> tuple[np.ndarray, np.ndarray]:
    if counts.kind != "full":
        raise StructuralError("conditional frequencies need the full design")
    return conditional_from_joint(counts.counts)


# --------------------------------------------------------------------------
# file formats


def write_counts_csv(counts: CountTable, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# format_version={FORMAT_VERSION} design={counts.kind}\n")
        w = csv.writer(fh)
        w.writerow(["a", "b", "x", "y", "count"])
        for (a, b, x, y), c in zip(counts.labels, counts.counts):
            w.writerow([a, b, x, y, int(c)])


def read_counts_csv(path) -> CountTable:
    rows = {}
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    reader = csv.DictReader(lines)
    if reader.fieldnames != ["a", "b", "x", "y", "count"]:
        raise StructuralError(f"bad count CSV header {reader.fieldnames}")
    try:
        for row in reader:
            lab = (int(row["a"]), int(row["b"]), int(row["x"]), int(row["y"]))
            if lab in rows:
                raise StructuralError(f"duplicate event {lab}")
            rows[lab] = int(row["count"])
    except (TypeError, ValueError) as exc:
        raise StructuralError(f"malformed count CSV: {exc}") from exc
    for kind, labels in (("full", full_labels()), ("partial", partial_labels())):
        if set(rows) == set(labels):
            return CountTable(kind, tuple(labels), np.array([rows[l] for l in labels], dtype=np.int64))
    raise StructuralError("count CSV events match neither the full nor the partial design")


def state_to_json(rho: np.ndarray) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(rho)],
    }


def state_from_json(obj: dict) -> np.ndarray:
    m = np.array([[complex(re, im) for re, im in row] for row in obj["matrix"]])
    if m.shape != (4, 4):
        raise StructuralError("state JSON must hold a 4x4 matrix")
    return m


def write_state_json(rho: np.ndarray, path) -> None:
    Path(path).write_text(json.dumps(state_to_json(rho), indent=1))


def read_state_json(path) -> np.ndarray:
    return state_from_json(json.loads(Path(path).read_text()))


__all__ = [
    "SETTINGS",
    "STATE_KINDS",
    "CountTable",
    "FrequencyVector",
    "born_probabilities",
    "check_density_matrix",
    "conditional_frequencies",
    "conditional_from_joint",
    "estimate_frequencies",
    "make_test_state",
    "sample_counts",
    "target_vector",
]
