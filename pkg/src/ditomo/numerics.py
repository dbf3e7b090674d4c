"""Small dense linear-algebra kernels and a reproducible random source.

Everything here works on numpy arrays. Matrices are at most 36x16 or 32x32,
so the eigensolver is a plain cyclic Jacobi method rather than LAPACK.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import StructuralError

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_C1 = 0xBF58476D1CE4E5B9
MIX_C2 = 0x94D049BB133111EB

POISSON_CHUNK = 10.0


def _check_square(M: np.ndarray) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {M.shape}")


def is_hermitian(M: np.ndarray) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    if M.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(M))))
    return float(np.max(np.abs(M - M.conj().T))) <= 1e-12 * scale


def check_hermitian(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M)
    _check_square(M)
    if not is_hermitian(M):
        raise StructuralError("matrix is not Hermitian within tolerance")
    return M


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # columns, unitary

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def jacobi_eigh(M: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100) -> EigenDecomposition:
    """Cyclic Jacobi diagonalization of a complex Hermitian matrix.

    Each rotation first removes the phase of the pivot element, then applies
    the real symmetric 2x2 rotation that annihilates it. Sweeps stop once the
    off-diagonal Frobenius norm falls below ``tol * ||M||_F``.
    """
    A = np.array(check_hermitian(M), dtype=np.complex128)
    n = A.shape[0]
    V = np.eye(n, dtype=np.complex128)
    A = 0.5 * (A + A.conj().T)
    target = tol * np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                app = A[p, p].real
                aqq = A[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                phase = apq / mag
                # U = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                U = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                A[:, idx] = A[:, idx] @ U
                A[idx, :] = U.conj().T @ A[idx, :]
                A[p, q] = A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                V[:, idx] = V[:, idx] @ U
    w = np.diag(A).real.copy()
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], V[:, order])


def hermitian_eig(M: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    return jacobi_eigh(M)


def eigvalsh(M: np.ndarray) -> np.ndarray:
    return hermitian_eig(M).eigenvalues


def min_eigenvalue(M: np.ndarray) -> float:
    return float(eigvalsh(M)[0])


def pseudoinverse(A: np.ndarray, relative_tolerance: float = 1e-12, refine_steps: int = 2) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a real matrix via the eigensystem of A^T A.

    Singular values are the square roots of the Gram eigenvalues, which only
    resolve down to about sqrt(n * eps) * sigma_max; the cutoff is floored there
    so numerically-zero directions are never inverted.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        raise StructuralError("pseudoinverse of an empty matrix")
    m, n = A.shape
    eig = jacobi_eigh(A.T @ A)
    lam = np.clip(eig.eigenvalues, 0.0, None)
    sigma = np.sqrt(lam)
    smax = float(sigma.max()) if sigma.size else 0.0
    if smax == 0.0:
        return np.zeros((n, m))
    cutoff = max(relative_tolerance, math.sqrt(n * np.finfo(float).eps)) * smax
    keep = sigma > cutoff
    V = eig.eigenvectors.real[:, keep]
    X = (V / lam[keep]) @ V.T @ A.T
    # Newton-Schulz steps X <- 2X - XAX recover the accuracy lost by squaring
    for _ in range(refine_steps):
        X = 2.0 * X - X @ (A @ X)
    return X


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(A), np.asarray(B))


def trace_norm(M: np.ndarray) -> float:
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    return float(np.sum(np.abs(eigvalsh(M))))


# --------------------------------------------------------------------------
# splitmix64 generator


def mix64(z: int) -> int:
    """splitmix64 output finalizer on a 64-bit word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_C1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_C2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Sub-seed for stream ``index`` of a master seed."""
    return mix64((master_seed & MASK64) ^ mix64((index + GOLDEN_GAMMA) & MASK64))


_U64 = numba.uint64


@numba.njit(cache=True)
def _next_u64(state):
    state = state + _U64(GOLDEN_GAMMA)
    z = state
    z = (z ^ (z >> _U64(30))) * _U64(MIX_C1)
    z = (z ^ (z >> _U64(27))) * _U64(MIX_C2)
    return state, z ^ (z >> _U64(31))


@numba.njit(cache=True)
def _uniform(state):
    # in (0, 1], so products in the Knuth loop never hit exactly zero early
    state, z = _next_u64(state)
    return state, (float(z >> _U64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _knuth(state, mean):
    limit = math.exp(-mean)
    k = 0
    p = 1.0
    while True:
        state, u = _uniform(state)
        p *= u
        if p <= limit:
            return state, k
        k += 1


@numba.njit(cache=True)
def _poisson_fill(state, means, out):
    for i in range(means.shape[0]):
        remaining = means[i]
        total = 0
        while remaining > 0.0:
            chunk = remaining if remaining < POISSON_CHUNK else POISSON_CHUNK
            state, k = _knuth(state, chunk)
            total += k
            remaining -= chunk
        out[i] = total
    return state


class Prng:
    """splitmix64 stream: 64-bit state advanced by the golden gamma, mixed on output."""

    algorithm = "splitmix64"

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    @classmethod
    def for_run(cls, master_seed: int, index: int) -> "Prng":
        return cls(derive_seed(master_seed, index))

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def poisson_many(self, means) -> np.ndarray:
        means = np.ascontiguousarray(means, dtype=np.float64)
        if means.ndim != 1:
            means = means.reshape(-1)
        if np.any(means < 0) or not np.all(np.isfinite(means)):
            raise ValueError("Poisson mean must be finite and non-negative")
        out = np.zeros(means.shape[0], dtype=np.int64)
        self.state = int(_poisson_fill(np.uint64(self.state), means, out))
        return out

    def poisson(self, mean: float) -> int:
        return int(self.poisson_many(np.array([mean], dtype=float))[0])


def poisson_sample(rng: Prng, mean: float) -> int:
    """Exact Poisson variate: Knuth's product method on chunks of mean <= 10."""
    return rng.poisson(mean)
