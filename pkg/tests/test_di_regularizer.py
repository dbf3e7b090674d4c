import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ditomo.di_regularizer as di
from ditomo.config import SolverConfig
from ditomo.di_regularizer import (
    ONE,
    Monomial,
    build_moment_index,
    hybrid_estimate,
    hybrid_from_joint,
    lift_to_joint,
    monomial_basis,
    quantum_behavior,
    quantum_moment_matrix,
    quantum_moments,
    reduce_word,
    regularize,
    weighted_kl,
)
from ditomo.errors import SolverStallError
from ditomo.numerics import Prng, eigvalsh, min_eigenvalue, trace_norm
from ditomo.scenario import full_design
from ditomo.simulation import conditional_frequencies, make_test_state, sample_counts

from conftest import random_density_matrix

A = lambda *xs: Monomial(xs, ())  # noqa: E731
B = lambda *ys: Monomial((), ys)  # noqa: E731
UNIFORM_XY = np.full((3, 3), 1 / 9)


def test_reduce_word_examples():
    assert reduce_word(A(1), A(1)) == A(1)
    assert reduce_word(Monomial((1,), (2,)), Monomial((1,), (2,))) == Monomial((1,), (2,))
    assert reduce_word(Monomial((1,), (1,)), Monomial((2,), (2,))) == Monomial((1, 2), (1, 2))
    assert reduce_word(ONE, ONE) == ONE
    assert reduce_word(A(2), A(1)) == A(2, 1)
    assert A(1, 1, 2, 2, 1) == A(1, 2, 1)


def _random_projector(rng, dim, rank):
    X = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    Q, _ = np.linalg.qr(X)
    return Q @ Q.conj().T


def test_reduce_word_against_random_realizations():
    # projectors on C^3 (x) C^3 realize the algebra; reduced words must give the same operator
    rng = np.random.default_rng(5)
    basis = monomial_basis()
    for _ in range(5):
        pa = {x: np.kron(_random_projector(rng, 3, 1 + x % 2), np.eye(3)) for x in (1, 2, 3)}
        pb = {y: np.kron(np.eye(3), _random_projector(rng, 3, 1 + y % 2)) for y in (1, 2, 3)}

        def op(w):
            out = np.eye(9, dtype=complex)
            for x in w.a_word:
                out = out @ pa[x]
            for y in w.b_word:
                out = out @ pb[y]
            return out

        for u in basis:
            for v in basis:
                direct = op(u).conj().T @ op(v)
                np.testing.assert_allclose(direct, op(reduce_word(u, v)), atol=1e-12)


def test_moment_index_structure():
    idx = build_moment_index()
    assert idx.size == 16
    assert idx.cell(ONE, ONE).variable is None
    assert idx.cell(A(1), A(1)) == idx.cell(ONE, A(1))
    ab = Monomial((1,), (2,))
    assert idx.cell(A(1), ab) == idx.cell(ONE, ab)
    assert idx.cell(ab, ab) == idx.cell(ONE, ab)
    # 15 real probability moments + 42 complex classes
    assert len(idx.variables) == 57
    assert sum(idx.is_real) == 15
    assert idx.n_params == 99
    for r in range(16):
        for c in range(16):
            a, b = idx.cells[r][c], idx.cells[c][r]
            assert a.variable == b.variable
            if a.variable is not None and not idx.is_real[a.variable]:
                assert a.conjugate != b.conjugate


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_assembled_matrix_hermitian(seed):
    idx = build_moment_index()
    theta = np.random.default_rng(seed).normal(size=idx.n_params)
    M = idx.assemble(theta)
    assert np.array_equal(M, M.conj().T)
    assert M[0, 0] == 1


def test_quantum_moment_matrix_maximally_mixed():
    M = quantum_moment_matrix(np.eye(4) / 4)
    basis = monomial_basis()
    for x in (1, 2, 3):
        assert M[0, basis.index(A(x))] == pytest.approx(0.5)
        for y in (1, 2, 3):
            assert M[0, basis.index(Monomial((x,), (y,)))] == pytest.approx(0.25)
    assert min_eigenvalue(M) > 1e-3


def test_index_matches_quantum_realization():
    idx = build_moment_index()
    rng = np.random.default_rng(8)
    for _ in range(20):
        rho = random_density_matrix(rng)
        np.testing.assert_allclose(idx.assemble(quantum_moments(rho)), quantum_moment_matrix(rho), atol=1e-14)
        np.testing.assert_allclose(di.behavior_from_moments(quantum_moments(rho)), quantum_behavior(rho), atol=1e-14)


def test_relaxation_contains_quantum_set():
    rng = np.random.default_rng(100)
    for i in range(100):
        rho = random_density_matrix(rng, rank=1 + i % 4)
        assert min_eigenvalue(quantum_moment_matrix(rho)) >= -1e-10


@pytest.mark.parametrize("kind", ["tau1", "tau2", "tau3"])
def test_regularize_exact_quantum_behavior(kind):
    P = quantum_behavior(make_test_state(kind))
    reg = regularize(P, UNIFORM_XY)
    assert reg.final_kl <= 1e-5
    assert np.max(np.abs(reg.conditional - P)) <= 1e-3
    assert reg.min_moment_eig >= -1e-9


def test_regularize_uniform():
    reg = regularize(np.full(36, 0.25), UNIFORM_XY)
    np.testing.assert_allclose(reg.conditional, 0.25, atol=1e-6)
    assert reg.final_kl <= 1e-8


def _check_behavior(reg):
    P = reg.conditional.reshape(3, 3, 2, 2)  # x, y, a, b
    # normalization and no-signalling hold by construction, up to rounding
    assert np.max(np.abs(P.sum(axis=(2, 3)) - 1)) <= 1e-15
    alice = P.sum(axis=3)
    bob = P.sum(axis=2)
    assert np.max(np.abs(alice - alice[:, :1, :])) <= 1e-15
    assert np.max(np.abs(bob - bob[:1, :, :])) <= 1e-15
    assert reg.conditional.min() >= 1e-12
    assert reg.min_moment_eig >= -1e-9
    for stage in reg.merit_history:
        assert np.all(np.diff(stage) <= 0)


def test_regularize_noisy_runs():
    rng = Prng(17)
    for i in range(15):
        kind = ("tau1", "tau2", "tau3")[i % 3]
        counts = sample_counts(rng, make_test_state(kind), full_design(), 1000)
        f_cond, f_xy = conditional_frequencies(counts)
        reg = regularize(f_cond, f_xy)
        _check_behavior(reg)
        assert reg.final_kl == pytest.approx(weighted_kl(f_cond, f_xy, reg.conditional), abs=1e-15)


def test_regularize_kl_optimality():
    # the optimum sits on the PSD boundary, so perturb along chords toward
    # quantum points: by convexity these stay inside the relaxation
    counts = sample_counts(Prng(23), make_test_state("tau2"), full_design(), 1000)
    f_cond, f_xy = conditional_frequencies(counts)
    reg = regularize(f_cond, f_xy)
    g_star = weighted_kl(f_cond, f_xy, reg.conditional)
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = quantum_moments(random_density_matrix(rng)) - reg.theta
        theta = reg.theta + 1e-4 * d / np.linalg.norm(d)
        g = weighted_kl(f_cond, f_xy, di.behavior_from_moments(theta))
        assert g >= g_star - 1e-8


def test_regularize_validation():
    with pytest.raises(ValueError):
        regularize(np.full(36, 0.3), UNIFORM_XY)
    with pytest.raises(ValueError):
        regularize(np.full(36, 0.25), np.full((3, 3), 0.2))


def test_stall_error_carries_diagnostics(monkeypatch):
    monkeypatch.setattr(di, "MAX_HALVINGS", 0)
    with pytest.raises(SolverStallError) as err:
        regularize(quantum_behavior(make_test_state("tau2")), UNIFORM_XY)
    assert {"t", "kl", "theta"} <= set(err.value.diagnostics)


def test_gradient_inner_method_stays_feasible():
    P = quantum_behavior(make_test_state("tau1"))
    reg = regularize(P, UNIFORM_XY, SolverConfig(inner_method="gradient", max_inner_iters=50))
    assert reg.min_moment_eig > 0
    _check_behavior(reg)


def test_lift_to_joint():
    reg = regularize(np.full(36, 0.25), UNIFORM_XY)
    np.testing.assert_allclose(lift_to_joint(reg, UNIFORM_XY), 1 / 36, atol=1e-7)
    f_xy = np.arange(1, 10).reshape(3, 3) / 45
    lifted = lift_to_joint(reg, f_xy)
    assert lifted.sum() == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(lifted.reshape(9, 4).sum(axis=1), f_xy.reshape(9), atol=1e-15)


@pytest.mark.parametrize("kind", ["tau1", "tau2", "tau3"])
def test_hybrid_noiseless(kind):
    rho = make_test_state(kind)
    res = hybrid_from_joint(quantum_behavior(rho) / 9)
    assert trace_norm(res.state - rho) <= 1e-3
    assert res.regularized.final_kl <= 1e-5


def test_hybrid_large_n_counts():
    rho = make_test_state("tau2")
    counts = sample_counts(Prng(3), rho, full_design(), 1e9)
    res = hybrid_estimate(counts)
    assert trace_norm(res.state - rho) <= 1e-3


def test_hybrid_outputs_physical():
    rng = Prng(41)
    for kind in ("tau1", "tau2", "tau3"):
        counts = sample_counts(rng, make_test_state(kind), full_design(), 1000)
        res = hybrid_estimate(counts)
        assert eigvalsh(res.state)[0] >= -1e-10
        assert abs(np.trace(res.state) - 1) <= 1e-10
