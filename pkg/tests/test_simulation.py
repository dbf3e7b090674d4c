import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ditomo.errors import DegenerateDataError, StructuralError
from ditomo.numerics import Prng, eigvalsh
from ditomo.scenario import full_design, full_labels, partial_design, partial_labels
from ditomo.simulation import (
    CountTable,
    born_probabilities,
    conditional_frequencies,
    estimate_frequencies,
    make_test_state,
    max_entangled,
    read_counts_csv,
    read_state_json,
    sample_counts,
    target_vector,
    write_counts_csv,
    write_state_json,
)


def full_table(counts):
    return CountTable("full", tuple(full_labels()), np.asarray(counts, dtype=np.int64))


def partial_table(counts):
    return CountTable("partial", tuple(partial_labels()), np.asarray(counts, dtype=np.int64))


@pytest.mark.parametrize("kind,lam", [("tau1", 0.52), ("tau2", 0.995), ("tau3", 0.995)])
def test_test_states(kind, lam):
    rho = make_test_state(kind)
    assert np.trace(rho).real == pytest.approx(1, abs=1e-12)
    assert eigvalsh(rho)[0] >= (1 - lam) / 4 - 1e-12
    chi = target_vector(kind)
    assert np.vdot(chi, rho @ chi).real == pytest.approx(lam + (1 - lam) / 4, abs=1e-12)


def test_tau2_fidelity_value():
    psi = max_entangled()
    assert np.vdot(psi, make_test_state("tau2") @ psi).real == pytest.approx(0.99625, abs=1e-14)


def test_tau3_target():
    v = target_vector("tau3")
    assert np.linalg.norm(v) == pytest.approx(1)
    assert v[0].real / v[3].real == pytest.approx(0.961 / 0.276)


def test_born_probabilities_examples():
    d = full_design()
    np.testing.assert_allclose(born_probabilities(np.eye(4) / 4, d), 1 / 36, atol=1e-15)
    psi = max_entangled()
    p = born_probabilities(np.outer(psi, psi.conj()), d)
    assert p[d.index((0, 0, 3, 3))] == pytest.approx(1 / 18, abs=1e-15)


def test_sample_counts_shapes_and_determinism():
    rho = make_test_state("tau2")
    a = sample_counts(Prng(1), rho, full_design(), 1000)
    b = sample_counts(Prng(1), rho, full_design(), 1000)
    assert len(a.counts) == 36
    np.testing.assert_array_equal(a.counts, b.counts)
    p = sample_counts(Prng(1), rho, partial_design(), 1000)
    assert len(p.counts) == 16 and p.kind == "partial"


def test_zero_probability_event_never_counted():
    psi = max_entangled()
    rho = np.outer(psi, psi.conj())
    d = full_design()
    idx = d.index((0, 1, 3, 3))  # |00>+|11> never gives different Z outcomes
    rng = Prng(3)
    for _ in range(200):
        assert sample_counts(rng, rho, d, 1000).counts[idx] == 0


def test_uniform_state_count_mean():
    rng = Prng(11)
    tables = np.array([sample_counts(rng, np.eye(4) / 4, full_design(), 1000).counts for _ in range(4000)])
    # each mean 1000/36; standard error sqrt(27.8 / 4000) ~ 0.083
    assert np.all(np.abs(tables.mean(axis=0) - 1000 / 36) < 0.5)


def test_count_means_chi_square_tau2():
    rho = make_test_state("tau2")
    d = full_design()
    runs = 10_000
    rng = Prng(2718)
    total = np.zeros(36)
    for _ in range(runs):
        total += sample_counts(rng, rho, d, 1000).counts
    expected = runs * 1000 * born_probabilities(rho, d)
    # summed independent Poisson counts: Pearson statistic ~ chi2(36)
    chi2 = np.sum((total - expected) ** 2 / expected)
    assert stats.chi2.sf(chi2, df=36) > 1e-3


def test_full_frequencies():
    f = estimate_frequencies(full_table(np.full(36, 7)))
    np.testing.assert_allclose(f.frequencies, 1 / 36)
    assert f.frequencies.sum() == 1.0
    assert f.total_estimate == 252


def test_partial_frequencies_from_normalization_counts():
    counts = np.zeros(16, dtype=int)
    labels = partial_labels()
    for (a, b), c in {(0, 0): 30, (0, 1): 20, (1, 0): 25, (1, 1): 25}.items():
        counts[labels.index((a, b, 1, 1))] = c
    f = estimate_frequencies(partial_table(counts))
    assert f.total_estimate == pytest.approx(900)
    assert f.frequencies[labels.index((0, 0, 1, 1))] == pytest.approx(30 / 900)
    assert f.frequencies[-1] == pytest.approx(1 - 100 / 900)
    assert not f.clamped


def test_partial_frequencies_clamp():
    labels = partial_labels()
    counts = np.array([1 if (l[2], l[3]) == (1, 1) else 100 for l in labels])
    f = estimate_frequencies(partial_table(counts))
    assert f.clamped
    assert f.frequencies[-1] == 0
    assert f.frequencies.sum() == pytest.approx(1, abs=1e-12)
    assert np.all(f.frequencies >= 0)


def test_frequencies_degenerate():
    with pytest.raises(DegenerateDataError):
        estimate_frequencies(full_table(np.zeros(36)))
    counts = np.zeros(16, dtype=int)
    counts[10] = 3  # (0, 0, 2, 2): outside the normalization subset
    with pytest.raises(DegenerateDataError):
        estimate_frequencies(partial_table(counts))


@pytest.mark.parametrize("kind", ["full", "partial"])
def test_exact_counts_recover_probabilities(kind):
    d = full_design() if kind == "full" else partial_design()
    rho = make_test_state("tau3")
    p = born_probabilities(rho, d)
    N = 10**9
    counts = np.rint(N * p[: len(d.observed_labels)]).astype(np.int64)
    table = full_table(counts) if kind == "full" else partial_table(counts)
    f = estimate_frequencies(table, d)
    assert np.max(np.abs(f.frequencies - p)) < 10 / N


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=16, max_size=16))
def test_partial_frequencies_normalized(counts):
    table = partial_table(counts)
    try:
        f = estimate_frequencies(table)
    except DegenerateDataError:
        return
    assert f.frequencies.sum() == pytest.approx(1, abs=1e-12)
    assert np.all(f.frequencies >= 0)


def test_conditional_frequencies():
    f_cond, f_xy = conditional_frequencies(full_table(np.full(36, 5)))
    np.testing.assert_allclose(f_cond, 0.25)
    assert f_xy.sum() == pytest.approx(1)
    counts = np.full(36, 5)
    counts[:4] = 0
    with pytest.raises(DegenerateDataError):
        conditional_frequencies(full_table(counts))
    with pytest.raises(StructuralError):
        conditional_frequencies(partial_table(np.ones(16)))


def test_conditional_frequency_of_forbidden_event_vanishes():
    psi = max_entangled()
    rho = np.outer(psi, psi.conj())
    idx = full_design().index((0, 1, 3, 3))
    for N in (1e3, 1e5):
        f_cond, _ = conditional_frequencies(sample_counts(Prng(4), rho, full_design(), N))
        assert f_cond[idx] == 0


def test_count_csv_roundtrip(tmp_path):
    rho = make_test_state("tau1")
    for design in (full_design(), partial_design()):
        table = sample_counts(Prng(8), rho, design, 1000)
        path = tmp_path / f"{design.kind}.csv"
        write_counts_csv(table, path)
        header = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")][0]
        assert header == "a,b,x,y,count"
        back = read_counts_csv(path)
        assert back.kind == design.kind
        np.testing.assert_array_equal(back.counts, table.counts)


def test_count_csv_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,x,y,count\n0,0,1,1,3\n")
    with pytest.raises(StructuralError):
        read_counts_csv(path)
    path.write_text("a,b,x,count\n")
    with pytest.raises(StructuralError):
        read_counts_csv(path)


def test_state_json_roundtrip(tmp_path):
    rho = make_test_state("tau3") + 0.01j * np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0] * 4, [0] * 4])
    write_state_json(rho, tmp_path / "s.json")
    np.testing.assert_array_equal(read_state_json(tmp_path / "s.json"), rho)
