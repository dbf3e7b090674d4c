"""Regularization of conditional frequencies onto a moment-matrix relaxation.

Each binary measurement is represented by its outcome-0 projector, A_x for
Alice and B_y for Bob. The moment matrix is indexed by the 16 monomials
{1, A_x, B_y, A_x B_y}; entry (u, v) is the expectation of the reduced word
u^dagger v. Letters are Hermitian projectors, A's commute with B's, and
repeated adjacent letters collapse.

The regularized behavior minimizes the input-weighted KL divergence
sum_xy f(xy) D(f(.|xy) || P(.|xy)) over moment assignments whose matrix is
positive semidefinite, using a log-det barrier path-following method.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .config import MleConfig, SolverConfig
from .errors import SolverStallError, StructuralError
from .estimators import MleResult, mle_estimate
from .numerics import kron, min_eigenvalue
from .scenario import I2, SETTINGS, build_local_projector, full_design
from .simulation import conditional_from_joint

ARMIJO = 1e-4
SHRINK = 0.5
MAX_HALVINGS = 200


# --------------------------------------------------------------------------
# word algebra


def _collapse(word: tuple) -> tuple:
    out = []
    for letter in word:
        if out and out[-1] == letter:
            continue
        out.append(letter)
    return tuple(out)


@dataclass(frozen=True, order=True)
class Monomial:
    """Product of Alice's projectors (a_word) followed by Bob's (b_word)."""

    a_word: tuple = ()
    b_word: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "a_word", _collapse(tuple(self.a_word)))
        object.__setattr__(self, "b_word", _collapse(tuple(self.b_word)))

    @property
    def is_identity(self) -> bool:
        return not self.a_word and not self.b_word

    def adjoint(self) -> "Monomial":
        return Monomial(self.a_word[::-1], self.b_word[::-1])

    def __mul__(self, other: "Monomial") -> "Monomial":
        # Bob's letters commute past Alice's
        return Monomial(self.a_word + other.a_word, self.b_word + other.b_word)

    def __str__(self) -> str:
        if self.is_identity:
            return "1"
        return "".join(f"A{x}" for x in self.a_word) + "".join(f"B{y}" for y in self.b_word)


ONE = Monomial()


def reduce_word(u: Monomial, v: Monomial) -> Monomial:
    """Canonical form of u^dagger v."""
    return u.adjoint() * v


def monomial_basis() -> list[Monomial]:
    basis = [ONE]
    basis += [Monomial((x,), ()) for x in SETTINGS]
    basis += [Monomial((), (y,)) for y in SETTINGS]
    basis += [Monomial((x,), (y,)) for x, y in product(SETTINGS, SETTINGS)]
    return basis


@dataclass(frozen=True)
class Cell:
    variable: int | None  # None for the constant 1
    conjugate: bool = False


@dataclass(frozen=True, eq=False)
class MomentIndex:
    basis: tuple
    variables: tuple  # representative word per free variable
    is_real: tuple
    cells: tuple  # cells[r][c]
    # affine parametrization M(theta) = offset + sum_k theta_k * generators[k]
    offset: np.ndarray = field(repr=False)
    generators: np.ndarray = field(repr=False)
    param_owner: tuple = ()  # (variable index, 0 for real part / 1 for imaginary part) per parameter

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def n_params(self) -> int:
        return len(self.param_owner)

    def cell(self, u: Monomial, v: Monomial) -> Cell:
        return self.cells[self.basis.index(u)][self.basis.index(v)]

    def variable_index(self, word: Monomial) -> int:
        return self.variables.index(_representative(word))

    def param_index(self, word: Monomial) -> int:
        """Parameter holding the (real part of the) variable for ``word``."""
        return self.param_owner.index((self.variable_index(word), 0))

    def assemble(self, theta: np.ndarray) -> np.ndarray:
        return self.offset + np.tensordot(theta, self.generators, axes=1)


def _representative(w: Monomial) -> Monomial:
    return min(w, w.adjoint())


def _probability_words() -> list[Monomial]:
    words = [Monomial((x,), ()) for x in SETTINGS]
    words += [Monomial((), (y,)) for y in SETTINGS]
    words += [Monomial((x,), (y,)) for x, y in product(SETTINGS, SETTINGS)]
    return words


@lru_cache(maxsize=None)
def build_moment_index() -> MomentIndex:
    basis = tuple(monomial_basis())
    n = len(basis)
    words = [[reduce_word(u, v) for v in basis] for u in basis]
    reps = {_representative(w) for row in words for w in row if not w.is_identity}
    prob = _probability_words()
    variables = tuple(prob + sorted(reps - set(prob)))
    is_real = tuple(v == v.adjoint() for v in variables)

    param_owner = []
    for k, real in enumerate(is_real):
        param_owner.append((k, 0))
        if not real:
            param_owner.append((k, 1))
    slot = {owner: i for i, owner in enumerate(param_owner)}

    offset = np.zeros((n, n), dtype=np.complex128)
    generators = np.zeros((len(param_owner), n, n), dtype=np.complex128)
    cells = []
    for r in range(n):
        row = []
        for c in range(n):
            w = words[r][c]
            if w.is_identity:
                row.append(Cell(None))
                offset[r, c] = 1.0
                continue
            rep = _representative(w)
            k = variables.index(rep)
            conj = w != rep
            row.append(Cell(k, conj))
            generators[slot[(k, 0)], r, c] = 1.0
            if not is_real[k]:
                generators[slot[(k, 1)], r, c] = -1j if conj else 1j
        cells.append(tuple(row))
    offset.setflags(write=False)
    generators.setflags(write=False)
    return MomentIndex(basis, variables, is_real, tuple(cells), offset, generators, tuple(param_owner))


# --------------------------------------------------------------------------
# quantum realization with the canonical Pauli measurements


def _letter_operator(party: str, setting: int) -> np.ndarray:
    proj = build_local_projector(party, 0, setting)
    return kron(proj, I2) if party == "A" else kron(I2, proj)


def word_operator(w: Monomial) -> np.ndarray:
    op = np.eye(4, dtype=np.complex128)
    for x in w.a_word:
        op = op @ _letter_operator("A", x)
    for y in w.b_word:
        op = op @ _letter_operator("B", y)
    return op


def quantum_moment_matrix(rho: np.ndarray) -> np.ndarray:
    """tr(rho u^dagger v) over the monomial basis, canonical measurements."""
    ops = [word_operator(u) for u in monomial_basis()]
    return np.array([[np.trace(rho @ a.conj().T @ b) for b in ops] for a in ops])


def quantum_moments(rho: np.ndarray, index: MomentIndex | None = None) -> np.ndarray:
    """Parameter vector theta realized by ``rho`` under the canonical measurements."""
    index = index or build_moment_index()
    values = [np.trace(rho @ word_operator(w)) for w in index.variables]
    theta = np.empty(index.n_params)
    for i, (k, part) in enumerate(index.param_owner):
        theta[i] = values[k].real if part == 0 else values[k].imag
    return theta


# --------------------------------------------------------------------------
# behaviors


@lru_cache(maxsize=None)
def probability_map() -> tuple[np.ndarray, np.ndarray]:
    """(C, c0) with P(ab|xy) = C theta + c0 in the canonical (x, y, a, b) order."""
    index = build_moment_index()
    C = np.zeros((36, index.n_params))
    c0 = np.zeros(36)
    row = 0
    for x, y in product(SETTINGS, SETTINGS):
        ia = index.param_index(Monomial((x,), ()))
        ib = index.param_index(Monomial((), (y,)))
        iab = index.param_index(Monomial((x,), (y,)))
        # P(00), P(01), P(10), P(11)
        C[row, iab] = 1.0
        C[row + 1, ia], C[row + 1, iab] = 1.0, -1.0
        C[row + 2, ib], C[row + 2, iab] = 1.0, -1.0
        C[row + 3, ia], C[row + 3, ib], C[row + 3, iab] = -1.0, -1.0, 1.0
        c0[row + 3] = 1.0
        row += 4
    C.setflags(write=False)
    c0.setflags(write=False)
    return C, c0


def behavior_from_moments(theta: np.ndarray) -> np.ndarray:
    C, c0 = probability_map()
    return C @ theta + c0


def quantum_behavior(rho: np.ndarray) -> np.ndarray:
    """P(ab|xy) = tr((M_a|x (x) M_b|y) rho) in the canonical order."""
    design = full_design()
    return np.einsum("mij,ji->m", design.elements, rho).real * 9.0


@dataclass(frozen=True, eq=False)
class RegularizedBehavior:
    conditional: np.ndarray  # P_DI(ab|xy), 36 entries
    theta: np.ndarray  # all moment parameters
    final_kl: float
    min_moment_eig: float
    barrier_t_final: float
    newton_steps: int
    merit_history: list = field(repr=False, default_factory=list)  # one array per barrier stage

    @property
    def expectations(self) -> np.ndarray:
        """The 15 probability moments <A_x>, <B_y>, <A_x B_y>."""
        return self.theta[:15].copy()

    def free_moments(self) -> dict[str, complex]:
        index = build_moment_index()
        values = {}
        for k, word in enumerate(index.variables[15:], start=15):
            re = self.theta[index.param_owner.index((k, 0))]
            im = 0.0 if index.is_real[k] else self.theta[index.param_owner.index((k, 1))]
            values[str(word)] = complex(re, im)
        return values

    def moment_matrix(self) -> np.ndarray:
        return build_moment_index().assemble(self.theta)


# --------------------------------------------------------------------------
# barrier solver


class _Problem:
    def __init__(self, f_cond: np.ndarray, f_xy: np.ndarray):
        self.index = build_moment_index()
        self.C, self.c0 = probability_map()
        weights = (np.asarray(f_xy).reshape(9)[:, None] * np.asarray(f_cond).reshape(9, 4)).reshape(36)
        self.active = weights > 0
        self.w = weights[self.active]
        self.f = np.asarray(f_cond)[self.active]
        self.Ca = self.C[self.active]
        self.c0a = self.c0[self.active]
        gens = self.index.generators
        self.G = gens
        self.GT_flat = np.ascontiguousarray(gens.transpose(0, 2, 1).reshape(len(gens), -1))

    def probs(self, theta):
        return self.Ca @ theta + self.c0a

    def kl(self, theta) -> float:
        p = self.probs(theta)
        if np.any(p <= 0):
            return np.inf
        return float(np.sum(self.w * np.log(self.f / p)))

    def factor(self, theta):
        """Cholesky factor of M(theta), or None outside the interior."""
        M = self.index.assemble(theta)
        try:
            return M, np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return M, None

    @staticmethod
    def logdet(L) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(L).real)))

    def derivatives(self, theta, t, L, newton: bool):
        p = self.probs(theta)
        ratio = self.w / p
        grad = -t * (self.Ca.T @ ratio)
        n = L.shape[0]
        Linv = np.linalg.solve(L, np.eye(n))
        W = Linv.conj().T @ Linv
        grad -= (self.GT_flat @ W.reshape(-1)).real
        if not newton:
            return grad, None
        hess = t * (self.Ca.T * (ratio / p)) @ self.Ca
        WGW = (W[None] @ self.G @ W[None]).reshape(len(self.G), -1)
        hess += (WGW @ self.GT_flat.T).real
        return grad, 0.5 * (hess + hess.T)


def _validate_inputs(f_cond, f_xy) -> tuple[np.ndarray, np.ndarray]:
    f_cond = np.asarray(f_cond, dtype=float).reshape(-1)
    f_xy = np.asarray(f_xy, dtype=float).reshape(3, 3)
    if f_cond.shape != (36,):
        raise StructuralError("conditional table must have 36 entries")
    if np.any(f_cond < 0) or np.any(f_xy < 0):
        raise ValueError("frequencies must be non-negative")
    if np.max(np.abs(f_cond.reshape(9, 4).sum(axis=1) - 1)) > 1e-9:
        raise ValueError("conditional frequencies are not normalized per setting")
    if abs(f_xy.sum() - 1) > 1e-9:
        raise ValueError("input frequencies are not normalized")
    return f_cond, f_xy


def regularize(f_cond, f_xy, config: SolverConfig | None = None) -> RegularizedBehavior:
    """Most likely behavior in the relaxation for the observed conditional frequencies.

    Path following on t * KL(theta) - log det M(theta), t growing by
    ``t_factor`` until size / t < ``gap_tol``. Each stage is solved by damped
    Newton steps (or plain gradient steps) with Armijo backtracking from the
    previous stage's solution, starting at the moments of the maximally mixed
    state.
    """
    config = config or SolverConfig()
    f_cond, f_xy = _validate_inputs(f_cond, f_xy)
    prob = _Problem(f_cond, f_xy)
    size = prob.index.size
    newton = config.inner_method == "newton"

    theta = quantum_moments(np.eye(4) / 4, prob.index)
    _, L = prob.factor(theta)
    kl = prob.kl(theta)
    t = config.t0
    merit_history = []
    total_steps = 0
    while True:
        merit = t * kl - prob.logdet(L)
        stage = [merit]
        for _ in range(config.max_inner_iters):
            grad, hess = prob.derivatives(theta, t, L, newton)
            if newton:
                try:
                    step = np.linalg.solve(hess, -grad)
                except np.linalg.LinAlgError:
                    step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
                decrement = float(-grad @ step)
                if decrement / 2 <= config.inner_tol:
                    break
            else:
                step = -grad
                if float(np.linalg.norm(grad)) <= config.inner_tol:
                    break
            slope = float(grad @ step)
            if slope >= 0:
                break
            s = 1.0
            for _halving in range(MAX_HALVINGS):
                cand = theta + s * step
                _, L_new = prob.factor(cand)
                if L_new is not None:
                    kl_new = prob.kl(cand)
                    if np.isfinite(kl_new):
                        merit_new = t * kl_new - prob.logdet(L_new)
                        if merit_new <= merit + ARMIJO * s * slope:
                            break
                s *= SHRINK
            else:
                if newton and decrement / 2 <= 1e3 * config.inner_tol:
                    # remaining decrease is below the resolution of the merit value
                    break
                raise SolverStallError(
                    "line search failed",
                    {"t": t, "kl": kl, "merit": merit, "slope": slope, "theta": theta.copy()},
                )
            stalled = merit - merit_new <= 8 * np.finfo(float).eps * abs(merit)
            theta, L, kl, merit = cand, L_new, kl_new, merit_new
            stage.append(merit)
            total_steps += 1
            if stalled:
                # no decrease resolvable in floating point: the stage is solved
                break
        merit_history.append(np.array(stage))
        if size / t < config.gap_tol:
            break
        t *= config.t_factor

    M = prob.index.assemble(theta)
    return RegularizedBehavior(
        conditional=behavior_from_moments(theta),
        theta=theta,
        final_kl=max(kl, 0.0),
        min_moment_eig=min_eigenvalue(0.5 * (M + M.conj().T)),
        barrier_t_final=t,
        newton_steps=total_steps,
        merit_history=merit_history,
    )


def weighted_kl(f_cond, f_xy, p_cond) -> float:
    """sum_xy f(xy) sum_ab f(ab|xy) log(f(ab|xy) / P(ab|xy))."""
    f_cond, f_xy = _validate_inputs(f_cond, f_xy)
    w = (f_xy.reshape(9)[:, None] * f_cond.reshape(9, 4)).reshape(36)
    p = np.asarray(p_cond, dtype=float)
    mask = w > 0
    if np.any(p[mask] <= 0):
        return np.inf
    return float(np.sum(w[mask] * np.log(f_cond[mask] / p[mask])))


def lift_to_joint(reg: RegularizedBehavior | np.ndarray, f_xy) -> np.ndarray:
    """P_uncond(abxy) = P_DI(ab|xy) f(xy)."""
    cond = np.asarray(getattr(reg, "conditional", reg), dtype=float).reshape(9, 4)
    f_xy = np.asarray(f_xy, dtype=float).reshape(9)
    return (cond * f_xy[:, None]).reshape(36)


def hybrid_from_joint(
    joint, solver: SolverConfig | None = None, mle: MleConfig | None = None
) -> MleResult:
    """Regularize, lift, then run device-dependent MLE on the lifted vector."""
    f_cond, f_xy = conditional_from_joint(joint)
    reg = regularize(f_cond, f_xy, solver)
    lifted = lift_to_joint(reg, f_xy)
    lifted = lifted / lifted.sum()
    result = mle_estimate(lifted, full_design(), mle)
    return MleResult(
        result.state,
        result.final_kl,
        result.iterations,
        result.final_epsilon,
        result.converged,
        result.kl_history,
        regularized=reg,
    )


def hybrid_estimate(counts, solver: SolverConfig | None = None, mle: MleConfig | None = None) -> MleResult:
    if counts.kind != "full":
        raise StructuralError("the hybrid estimator needs full-design counts")
    return hybrid_from_joint(np.asarray(counts.counts, dtype=float), solver, mle)
