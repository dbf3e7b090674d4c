"""Device-dependent state estimators: linear inversion and diluted iterative MLE."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .config import MleConfig
from .errors import StructuralError
from .numerics import min_eigenvalue, pseudoinverse
from .scenario import TomographyDesign, build_pauli_basis
from .simulation import FrequencyVector

KL_FLOOR = 1e-300
RATE_WINDOW = 20


def _as_distribution(v, name: str) -> np.ndarray:
    v = np.asarray(getattr(v, "frequencies", v), dtype=float)
    if v.ndim != 1:
        raise StructuralError(f"{name} must be a vector")
    if np.any(v < 0):
        raise ValueError(f"{name} has negative entries")
    return v


def kl_divergence(f, p) -> float:
    """D(f || p) = sum f log(f / p), with 0 log 0 = 0 and +inf where p vanishes under f > 0."""
    f = _as_distribution(f, "f")
    p = _as_distribution(p, "p")
    if f.shape != p.shape:
        raise StructuralError(f"length mismatch {f.shape} vs {p.shape}")
    return float(_kl(f, p))


@numba.njit(cache=True)
def _kl(f, p):
    total = 0.0
    for i in range(f.shape[0]):
        if f[i] > 0.0:
            if p[i] <= KL_FLOOR:
                return np.inf
            total += f[i] * np.log(f[i] / p[i])
    return total


@dataclass(frozen=True, eq=False)
class RawStateEstimate:
    matrix: np.ndarray
    trace_deviation: float  # |T_1 - 1| before normalization
    residual: float  # ||B T - f||_2

    @property
    def min_eigenvalue(self) -> float:
        return min_eigenvalue(self.matrix)


@lru_cache(maxsize=8)
def _design_pinv(design: TomographyDesign) -> np.ndarray:
    B_pinv = pseudoinverse(design.b_matrix)
    if np.linalg.matrix_rank(design.b_matrix) < 16:
        raise StructuralError("design is not informationally complete")
    return B_pinv


def linear_inversion(f, design: TomographyDesign) -> RawStateEstimate:
    """Least-squares Pauli coefficients T = B^+ f, normalized so that tr(rho) = 1."""
    f = _as_distribution(f, "f")
    if f.shape[0] != len(design):
        raise StructuralError("frequency vector does not match the design")
    B = design.b_matrix
    B_pinv = _design_pinv(design)
    T = B_pinv @ f
    residual = float(np.linalg.norm(B @ T - f))
    deviation = abs(T[0] - 1.0)
    T = T / T[0]
    rho = 0.25 * np.einsum("i,ijk->jk", T, np.array(build_pauli_basis()))
    rho = 0.5 * (rho + rho.conj().T)
    return RawStateEstimate(rho, float(deviation), residual)


@dataclass(frozen=True, eq=False)
class MleResult:
    state: np.ndarray
    final_kl: float
    iterations: int
    final_epsilon: float
    converged: bool
    kl_history: np.ndarray = field(repr=False)  # KL after start and after each accepted step
    regularized: object = None  # RegularizedBehavior for the hybrid pipeline


@numba.njit(cache=True)
def _probs(elements, rho, out):
    n = elements.shape[0]
    for m in range(n):
        acc = 0.0
        for i in range(4):
            for j in range(4):
                z = elements[m, i, j] * rho[j, i]
                acc += z.real
        out[m] = acc


@numba.njit(cache=True)
def _matmul4(a, b, out):
    for i in range(4):
        for j in range(4):
            acc = 0j
            for k in range(4):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc


@numba.njit(cache=True)
def _diluted_mle(elements, f, eps0, eps_min, kl_tol, max_iters, floor):
    n = elements.shape[0]
    fsum = f.sum()
    rho = np.zeros((4, 4), dtype=np.complex128)
    for i in range(4):
        rho[i, i] = 0.25
    p = np.empty(n)
    p_new = np.empty(n)
    _probs(elements, rho, p)
    kl = _kl(f, p)
    history = np.empty(max_iters + 1)
    history[0] = kl
    n_hist = 1

    R = np.empty((4, 4), dtype=np.complex128)
    A = np.empty((4, 4), dtype=np.complex128)
    tmp = np.empty((4, 4), dtype=np.complex128)
    cand = np.empty((4, 4), dtype=np.complex128)
    eps = eps0
    iterations = 0
    converged = False
    while iterations < max_iters:
        if eps < eps_min:
            converged = True
            break
        R[:, :] = 0.0
        for m in range(n):
            if f[m] > 0.0:
                w = f[m] / (p[m] if p[m] > floor else floor) / fsum
                for i in range(4):
                    for j in range(4):
                        R[i, j] += w * elements[m, i, j]
        for i in range(4):
            for j in range(4):
                A[i, j] = eps * R[i, j]
            A[i, i] += 1.0
        _matmul4(A, rho, tmp)
        _matmul4(tmp, A, cand)
        tr = 0.0
        for i in range(4):
            for j in range(i, 4):
                z = 0.5 * (cand[i, j] + np.conj(cand[j, i]))
                cand[i, j] = z
                cand[j, i] = np.conj(z)
            tr += cand[i, i].real
        diff = 0.0
        for i in range(4):
            for j in range(4):
                cand[i, j] /= tr
                d = abs(cand[i, j] - rho[i, j])
                if d > diff:
                    diff = d
        iterations += 1
        _probs(elements, cand, p_new)
        kl_new = _kl(f, p_new)
        if kl_new < kl:
            improvement = kl - kl_new
            rho[:, :] = cand
            p[:] = p_new
            kl = kl_new
            history[n_hist] = kl
            n_hist += 1
            # geometric extrapolation of the KL still to be gained, with the
            # contraction rate measured over the last RATE_WINDOW accepted steps
            remaining = np.inf
            if n_hist > RATE_WINDOW + 1:
                older = history[n_hist - 2 - RATE_WINDOW] - history[n_hist - 1 - RATE_WINDOW]
                if 0.0 < improvement < older:
                    ratio = (improvement / older) ** (1.0 / RATE_WINDOW)
                    remaining = improvement * ratio / (1.0 - ratio)
            if remaining < kl_tol or kl == 0.0:
                converged = True
                break
        elif diff <= 1e-15:
            # candidate equals the current iterate: a fixed point of the update
            converged = True
            break
        else:
            eps /= 10.0
    return rho, kl, iterations, eps, converged, history[:n_hist].copy()


def mle_estimate(f, design: TomographyDesign, config: MleConfig | None = None) -> MleResult:
    """Diluted iterative maximum likelihood starting from the maximally mixed state.

    A candidate (1 + eps R) rho (1 + eps R), normalized, is accepted only if it
    strictly lowers D(f || P(rho)); otherwise eps is divided by ten and the step
    retried. Iteration stops when eps drops below ``epsilon_min``, when the KL
    still to be gained (extrapolated from the ratio of the last two
    improvements over a window of accepted steps) is below ``kl_tol``, or after ``max_iters`` candidates.
    """
    config = config or MleConfig()
    f = _as_distribution(f, "f")
    if f.shape[0] != len(design):
        raise StructuralError("frequency vector does not match the design")
    if abs(f.sum() - 1.0) > 1e-9:
        raise ValueError(f"frequencies sum to {f.sum()}, not 1")
    elements = np.ascontiguousarray(design.elements, dtype=np.complex128)
    rho, kl, iters, eps, converged, hist = _diluted_mle(
        elements,
        np.ascontiguousarray(f),
        float(config.epsilon0),
        float(config.epsilon_min),
        float(config.kl_tol),
        int(config.max_iters),
        float(config.prob_floor),
    )
    return MleResult(rho, max(float(kl), 0.0), int(iters), float(eps), bool(converged), hist)


def estimate_from(f: FrequencyVector, design: TomographyDesign, method: str, config: MleConfig | None = None):
    if method == "lin":
        return linear_inversion(f, design)
    if method == "ml":
        return mle_estimate(f, design, config)
    raise StructuralError(f"unknown estimator {method!r}")
