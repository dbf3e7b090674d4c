"""Measurement design for the two-party, three-setting, two-outcome scenario.

Settings x, y in {1, 2, 3} measure the Pauli operators sigma_x / sigma_y; outputs
a, b in {0, 1}. Joint POVM elements carry the input probability P(xy) so that
the 36 of them sum to the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import StructuralError
from .numerics import kron, min_eigenvalue

SETTINGS = (1, 2, 3)
OUTCOMES = (0, 1)
COMPLEMENT = "COMPLEMENT"

I2 = np.eye(2, dtype=np.complex128)
PAULI = (
    I2,
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)

# per-party (a, x) pairs kept in the partial design
PARTIAL_LOCAL_EVENTS = ((0, 1), (1, 1), (0, 2), (0, 3))


@dataclass(frozen=True)
class BellScenario:
    inputs_per_party: int = 3
    outputs_per_setting: int = 2
    input_distribution: dict = field(default_factory=lambda: {(x, y): 1 / 9 for x in SETTINGS for y in SETTINGS})

    def __post_init__(self):
        if (self.inputs_per_party, self.outputs_per_setting) != (3, 2):
            raise StructuralError("only the 3-input / 2-output scenario is supported")
        total = sum(self.input_distribution.values())
        if abs(total - 1.0) > 1e-12:
            raise StructuralError(f"input distribution sums to {total}, not 1")

    def p_xy(self, x: int, y: int) -> float:
        return self.input_distribution[(x, y)]


def full_labels() -> list[tuple[int, int, int, int]]:
    """Canonical (a, b, x, y) ordering: settings outermost, then outcomes."""
    return [(a, b, x, y) for x, y in product(SETTINGS, SETTINGS) for a, b in product(OUTCOMES, OUTCOMES)]


def partial_labels() -> list[tuple[int, int, int, int]]:
    return [(a, b, x, y) for (a, x), (b, y) in product(PARTIAL_LOCAL_EVENTS, PARTIAL_LOCAL_EVENTS)]


def build_local_projector(party: str, outcome: int, setting: int) -> np.ndarray:
    """(1 + (-1)^a sigma_x) / 2 for party 'A' or 'B'."""
    if party not in ("A", "B"):
        raise StructuralError(f"party must be 'A' or 'B', got {party!r}")
    if outcome not in OUTCOMES or setting not in SETTINGS:
        raise StructuralError(f"invalid outcome/setting ({outcome}, {setting})")
    return 0.5 * (I2 + (-1) ** outcome * PAULI[setting])


@lru_cache(maxsize=None)
def _pauli_basis() -> tuple[np.ndarray, ...]:
    mats = []
    for j in range(4):
        for k in range(4):
            m = kron(PAULI[j], PAULI[k])
            m.setflags(write=False)
            mats.append(m)
    return tuple(mats)


def build_pauli_basis() -> list[np.ndarray]:
    """Gamma_i = sigma_j (x) sigma_k, flattened as i = 4j + k (0-based)."""
    return list(_pauli_basis())


def b_matrix_for(elements: np.ndarray) -> np.ndarray:
    """Rows tr(M_mu Gamma_i) / 4, real because both factors are Hermitian."""
    gammas = np.array(build_pauli_basis())
    return np.einsum("mij,kji->mk", elements, gammas).real / 4.0


@dataclass(frozen=True)
class EventSubset:
    kept: tuple  # I
    normalization: tuple  # J, subset of I
    alpha: float


@dataclass(frozen=True, eq=False)
class TomographyDesign:
    kind: str  # "full" or "partial"
    labels: tuple  # (a, b, x, y) per element, or COMPLEMENT
    elements: np.ndarray  # (n_M, 4, 4)
    b_matrix: np.ndarray  # (n_M, 16)
    subset: EventSubset | None = None

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def observed_labels(self) -> tuple:
        return tuple(l for l in self.labels if l != COMPLEMENT)

    def index(self, label) -> int:
        return self.labels.index(label)

    def check(self, tol: float = 1e-12) -> None:
        total = self.elements.sum(axis=0)
        if np.max(np.abs(total - np.eye(4))) > tol:
            raise StructuralError("POVM elements do not sum to the identity")
        for m in self.elements:
            if min_eigenvalue(m) < -tol:
                raise StructuralError("POVM element is not positive semidefinite")


def _joint_element(scenario: BellScenario, a: int, b: int, x: int, y: int) -> np.ndarray:
    return scenario.p_xy(x, y) * kron(build_local_projector("A", a, x), build_local_projector("B", b, y))


def build_joint_povm(scenario: BellScenario | None = None) -> TomographyDesign:
    scenario = scenario or BellScenario()
    labels = tuple(full_labels())
    elements = np.array([_joint_element(scenario, *lab) for lab in labels])
    elements.setflags(write=False)
    return TomographyDesign("full", labels, elements, b_matrix_for(elements))


def build_partial_design(scenario: BellScenario | None = None) -> tuple[TomographyDesign, EventSubset]:
    """16 kept joint events plus the complement element 1 - sum(kept)."""
    scenario = scenario or BellScenario()
    kept = tuple(partial_labels())
    norm = tuple(l for l in kept if l[2] == 1 and l[3] == 1)
    alpha = scenario.p_xy(1, 1)
    kept_elems = [_joint_element(scenario, *lab) for lab in kept]
    m_j = sum(kept_elems[kept.index(l)] for l in norm)
    if np.max(np.abs(m_j - alpha * np.eye(4))) > 1e-12:
        raise StructuralError("normalization subset is not proportional to the identity")
    complement = np.eye(4) - sum(kept_elems)
    elements = np.array(kept_elems + [complement])
    elements.setflags(write=False)
    subset = EventSubset(kept, norm, alpha)
    design = TomographyDesign("partial", kept + (COMPLEMENT,), elements, b_matrix_for(elements), subset)
    return design, subset


@lru_cache(maxsize=None)
def full_design() -> TomographyDesign:
    return build_joint_povm()


@lru_cache(maxsize=None)
def partial_design() -> TomographyDesign:
    return build_partial_design()[0]


def design_for(kind: str) -> TomographyDesign:
    if kind == "full":
        return full_design()
    if kind == "partial":
        return partial_design()
    raise StructuralError(f"unknown design kind {kind!r}")
