import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavytail_oqs.errors import DecompositionError, InsufficientDataError, InvalidDimensionError, InvalidParameterError
from heavytail_oqs.liouvillian import LindbladModel, build_superoperator
from heavytail_oqs.operator_basis import vectorize
from heavytail_oqs.rng_ensembles import SeedSpec, sample_gue_hamiltonian
from heavytail_oqs.spectral_analysis import (
    EIGS_COLUMNS,
    build_delta_superoperator,
    compute_metrics,
    decompose,
    empirical_ccdf,
    nn_spacings,
    pdf_histogram,
    perturb_eigenvalues,
    petermann_factors,
    q_factors,
    read_eigenvalue_csv,
    spectral_gap,
    spectral_norm,
    steady_state_distance,
    write_eigenvalue_csv,
)
from heavytail_oqs.verify import dephasing_model, random_model


@pytest.fixture(scope="module")
def heavy_dec():
    op = build_superoperator(random_model(6, 4242, 1.0))
    return op, decompose(op)


def test_dephasing_ordering_and_gap():
    dec = decompose(build_superoperator(dephasing_model()))
    assert np.allclose(dec.eigenvalues, [0, 0, -2, -2], atol=1e-12)
    assert spectral_gap(dec) == 0.0


def test_ordering_tie_breaks():
    lam = np.array([-1 + 2j, -1 - 2j, -1 + 0.5j, 0.0, -1 - 0.5j, -3.0])
    dec = decompose(np.diag(lam))
    assert np.allclose(dec.eigenvalues, [0, -1 - 0.5j, -1 + 0.5j, -1 - 2j, -1 + 2j, -3])


def test_hermitian_limit():
    a = sample_gue_hamiltonian(12, SeedSpec(1, 1))
    dec = decompose(a)
    assert np.allclose(petermann_factors(dec), 1.0, atol=1e-10)
    # left and right vectors agree up to phase
    overlap = np.abs(np.einsum("ij,ij->j", dec.left.conj(), dec.right))
    assert np.allclose(overlap, 1.0, atol=1e-10)


def test_two_by_two_non_normal_oracle():
    a = np.array([[0.0, 1.0], [0.0, -1.0]])
    dec = decompose(a)
    assert np.allclose(dec.eigenvalues, [0, -1])
    r0 = dec.right[:, 0] / dec.right[0, 0]
    r1 = dec.right[:, 1] / dec.right[0, 1]
    assert np.allclose(r0, [1, 0]) and np.allclose(r1, [1, -1])
    assert np.allclose(petermann_factors(dec), [2.0, 2.0], atol=1e-12)


def test_ginue_model_invariants():
    op = build_superoperator(random_model(10, 77, None))
    dec = decompose(op)
    errs = dec.invariant_errors(op.matrix)
    assert errs["residual"] < 1e-8
    assert errs["biorthonormality"] < 1e-8
    assert errs["zero_mode"] < 1e-8
    assert errs["conjugate_symmetry"] < 1e-8
    assert not dec.flagged.any()


def test_heavy_tailed_invariants(heavy_dec):
    op, dec = heavy_dec
    errs = dec.invariant_errors(op.matrix)
    assert max(errs.values()) < 1e-8
    assert np.all(np.linalg.norm(dec.right, axis=0) == pytest.approx(1.0, abs=1e-12))
    assert np.allclose(np.diag(dec.overlaps()), 1.0, atol=1e-10)


def test_gap_matches_independent_sort(heavy_dec):
    _, dec = heavy_dec
    raw = np.sort(np.linalg.eigvals(dec.right @ np.diag(dec.eigenvalues) @ dec.left.conj().T).real)[::-1]
    assert spectral_gap(dec) == pytest.approx(-raw[1], rel=1e-8, abs=1e-12)


def test_petermann_bounds_and_rescaling(heavy_dec):
    _, dec = heavy_dec
    km = petermann_factors(dec)
    assert np.nanmin(km) >= 1 - 1e-8
    rng = np.random.default_rng(0)
    c = rng.normal(size=dec.dim) + 1j * rng.normal(size=dec.dim)
    assert np.allclose(petermann_factors(dec.rescaled(c)), km, rtol=1e-8)


def test_flagged_modes_get_nan():
    # a Jordan block is defective: the raw overlap vanishes
    dec = decompose(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert dec.flagged.all()
    assert np.isnan(petermann_factors(dec)).all()


def test_decompose_errors():
    with pytest.raises(DecompositionError):
        decompose(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(InvalidDimensionError):
        decompose(np.ones((2, 3)))


def test_q_factors():
    dec = decompose(np.diag([0.0, -1 + 2j, -1 - 2j, -3.0]))
    q = q_factors(dec)
    assert math.isnan(q[0])
    assert np.allclose(q[1:], [1.0, 1.0, 0.0])


def test_nn_spacings_direct():
    assert np.allclose(nn_spacings(np.array([0.0, -1.0, -1.5])), [1.0, 0.5, 0.5])
    lam = np.array([-1 + 0.3j, -1 - 0.3j, -5.0])
    assert np.all(nn_spacings(lam)[:2] <= 2 * 0.3 + 1e-15)
    with pytest.raises(InsufficientDataError):
        nn_spacings(np.array([1.0]))


def test_nn_spacings_brute_force(heavy_dec):
    _, dec = heavy_dec
    lam = dec.eigenvalues
    d = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(d, np.inf)
    assert np.allclose(nn_spacings(dec), d.min(axis=1), rtol=1e-12, atol=0)


def test_steady_state_distance():
    dec = decompose(build_superoperator(random_model(3, 5, None, hamiltonian=False)))
    assert steady_state_distance(dec) >= 0
    # a unital model (Hermitian jump operators) has the maximally mixed steady state
    n = 3
    k = np.zeros((8, 8))
    k[6, 6] = k[7, 7] = 1.5
    uni = decompose(build_superoperator(LindbladModel(np.diag([0.3, -0.1, 0.9]), k)))
    assert uni.eigenvalues[0] == pytest.approx(0, abs=1e-12)
    m = compute_metrics(decompose(build_superoperator(LindbladModel(np.zeros((n, n)), np.eye(8) * 3 / 8))))
    assert m.steady_state_distance < 1e-10


def test_empirical_ccdf():
    assert empirical_ccdf([-2, -1, 0], [-1])[0] == pytest.approx(2 / 3)
    assert list(empirical_ccdf([-2, -1, 0], [-5, 5])) == [1.0, 0.0]
    grid = np.linspace(-3, 1, 50)
    c = empirical_ccdf(np.random.default_rng(0).normal(size=500), grid)
    assert np.all(np.diff(c) <= 0)
    with pytest.raises(InsufficientDataError):
        empirical_ccdf([], [0])


def test_pdf_histogram_linear_and_log():
    u = np.random.default_rng(1).uniform(size=100_000)
    h = pdf_histogram(u, bins=10, range=(0, 1))
    assert np.allclose(h.density, 1.0, atol=0.05)
    assert abs(np.sum(h.density * np.diff(h.edges)) - 1) < 1e-12
    x = np.concatenate([np.geomspace(1e-6, 1e3, 1000), [-1.0, 0.0]])
    hl = pdf_histogram(x, bins=30, log=True)
    assert hl.excluded == 2
    assert np.allclose(np.diff(np.log(hl.edges)), np.log(hl.edges[1] / hl.edges[0]))
    assert abs(np.sum(hl.density * np.diff(hl.edges)) - 1) < 1e-12
    with pytest.raises(InsufficientDataError):
        pdf_histogram([], bins=3)


def test_delta_superoperator():
    assert not np.any(build_delta_superoperator(np.zeros((3, 3))).matrix)
    v = sample_gue_hamiltonian(3, SeedSpec(2, 2))
    dl = build_delta_superoperator(v)
    assert np.max(np.abs(vectorize(np.eye(3)).conj() @ dl.matrix)) < 1e-12
    model = random_model(3, 900, 1.0)
    moved = LindbladModel(model.hamiltonian + v, model.kossakowski)
    diff = build_superoperator(moved).matrix - build_superoperator(model).matrix
    assert np.max(np.abs(diff - dl.matrix)) < 1e-12
    with pytest.raises(InvalidParameterError):
        build_delta_superoperator(np.array([[0, 1], [0, 0]]))


def test_perturbation_zero_and_mismatch(heavy_dec):
    _, dec = heavy_dec
    res = perturb_eigenvalues(dec, np.zeros((dec.dim, dec.dim)))
    assert not np.any(np.nan_to_num(res.shifts))
    with pytest.raises(InvalidDimensionError):
        perturb_eigenvalues(dec, np.zeros((3, 3)))


def test_perturbation_cubic_error_decay():
    rng = np.random.default_rng(3)
    lam0 = np.array([0.0, -1.0, -2.0 + 1j, -2.0 - 1j, -4.0])
    d = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    dec = decompose(np.diag(lam0))
    errs = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        pred = dec.eigenvalues + perturb_eigenvalues(dec, eps * d).shifts
        exact = np.linalg.eigvals(np.diag(lam0) + eps * d)
        errs.append(max(np.min(np.abs(exact - p)) for p in pred))
    assert 6 <= errs[0] / errs[1] <= 10 and 6 <= errs[1] / errs[2] <= 10


def test_first_order_sum_is_trace(heavy_dec):
    op, dec = heavy_dec
    dl = build_delta_superoperator(sample_gue_hamiltonian(6, SeedSpec(4, 4))).matrix
    first = perturb_eigenvalues(dec, dl).first_order
    assert abs(np.sum(first) - np.trace(dl)) < 1e-8 * spectral_norm(dl) * dec.dim
    km = petermann_factors(dec)
    assert np.all(np.abs(first) <= np.sqrt(km) * spectral_norm(dl) * (1 + 1e-10))


def test_degenerate_pairs_are_excluded():
    dec = decompose(np.diag([0.0, -1.0, -1.0, -3.0]))
    res = perturb_eigenvalues(dec, 1e-3 * np.ones((4, 4)))
    assert res.excluded_pairs == 1
    assert np.all(np.isfinite(res.shifts))


def test_spectral_norm_paths():
    a = np.random.default_rng(5).normal(size=(40, 40))
    assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-12)


def test_eigenvalue_csv_round_trip(tmp_path, heavy_dec):
    _, dec = heavy_dec
    m = compute_metrics(dec)
    path = tmp_path / "eigs.csv"
    write_eigenvalue_csv(path, "nu1/r000", dec, m)
    assert path.read_text().splitlines()[0] == ",".join(EIGS_COLUMNS)
    back = read_eigenvalue_csv(path)
    assert np.array_equal(back["re_lambda"], dec.eigenvalues.real)
    assert np.array_equal(back["im_lambda"], dec.eigenvalues.imag)
    assert np.array_equal(back["petermann"], m.petermann, equal_nan=True)
    assert np.array_equal(back["q_factor"], m.q_factors, equal_nan=True)
    assert back["mode_index"].tolist() == list(range(dec.dim))


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 4), nu=st.sampled_from([None, 1.0, 2.0, 5.0]), idx=st.integers(0, 10**5))
def test_decomposition_invariants_property(n, nu, idx):
    op = build_superoperator(random_model(n, 7 * idx + 1, nu))
    dec = decompose(op)
    errs = dec.invariant_errors(op.matrix)
    assert errs["residual"] < 1e-8
    assert errs["zero_mode"] < 1e-8
    assert errs["conjugate_symmetry"] < 1e-8
    assert errs["biorthonormality"] < 1e-8
    assert spectral_gap(dec) >= 0
    assert np.nanmin(petermann_factors(dec)) >= 1 - 1e-8
