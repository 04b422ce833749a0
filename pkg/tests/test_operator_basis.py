import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavytail_oqs.errors import InvalidDimensionError, InvalidParameterError
from heavytail_oqs.operator_basis import devectorize, su_generators, transform_kossakowski, vectorize
from heavytail_oqs.rng_ensembles import (
    SeedSpec,
    build_kossakowski,
    sample_ginibre,
    sample_haar_unitary,
    sample_student_t_matrix,
)


def rand_c(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_pauli_case():
    sx = np.array([[0, 1], [1, 0]]) / math.sqrt(2)
    sy = np.array([[0, -1j], [1j, 0]]) / math.sqrt(2)
    sz = np.array([[1, 0], [0, -1]]) / math.sqrt(2)
    g = su_generators(2).generators
    assert len(g) == 3
    for got, want in zip(g, (sx, sy, sz)):
        assert np.allclose(got, want, atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4, 7])
def test_orthonormal_traceless_hermitian(n):
    g = su_generators(n).generators
    assert g.shape == (n * n - 1, n, n)
    gram = np.einsum("kij,lij->kl", g.conj(), g)
    assert np.allclose(gram, np.eye(n * n - 1), atol=1e-14)
    assert np.max(np.abs(np.trace(g, axis1=1, axis2=2))) < 1e-12
    assert np.allclose(g, g.conj().transpose(0, 2, 1), atol=0)


def test_canonical_ordering_n3():
    g = su_generators(3).generators
    e = lambda j, k: np.eye(3)[:, [j]] @ np.eye(3)[[k], :]  # noqa: E731
    pairs = [(0, 1), (0, 2), (1, 2)]
    for i, (j, k) in enumerate(pairs):
        assert np.allclose(g[i], (e(j, k) + e(k, j)) / math.sqrt(2))
        assert np.allclose(g[3 + i], -1j * (e(j, k) - e(k, j)) / math.sqrt(2))
    assert np.allclose(g[6], np.diag([1, -1, 0]) / math.sqrt(2))
    assert np.allclose(g[7], np.diag([1, 1, -2]) / math.sqrt(6))


def test_n50_spot_check():
    g = su_generators(50).generators
    assert len(g) == 2499
    rng = np.random.default_rng(0)
    for _ in range(100):
        k, l = rng.integers(0, 2499, size=2)
        ip = np.vdot(g[k], g[l])
        assert abs(ip - (1.0 if k == l else 0.0)) < 1e-12


def test_rejects_small_n():
    with pytest.raises(InvalidDimensionError):
        su_generators(1)


def test_generators_are_read_only():
    g = su_generators(3).generators
    with pytest.raises(ValueError):
        g[0, 0, 0] = 5


@pytest.mark.parametrize("n", [2, 3, 5])
def test_spans_traceless_hermitian(n):
    rng = np.random.default_rng(n)
    a = rand_c(rng, n, n)
    t = a + a.conj().T
    t -= np.trace(t) / n * np.eye(n)
    basis = su_generators(n)
    c = basis.coefficients(t)
    assert np.allclose(c.imag, 0, atol=1e-12)
    assert np.allclose(np.einsum("k,kij->ij", c, basis.generators), t, atol=1e-10)


def test_vectorize_convention():
    m = np.array([[1, 2], [3, 4]])
    assert vectorize(m).tolist() == [1, 3, 2, 4]
    rng = np.random.default_rng(3)
    r = rand_c(rng, 5, 5)
    v = vectorize(r)
    assert all(v[j * 5 + i] == r[i, j] for i in range(5) for j in range(5))
    assert np.array_equal(devectorize(v), r)


def test_vectorize_errors():
    with pytest.raises(InvalidDimensionError):
        vectorize(np.ones((2, 3)))
    with pytest.raises(InvalidDimensionError):
        devectorize(np.ones(5))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 4), s=st.integers(0, 10**6))
def test_kronecker_identity(n, s):
    rng = np.random.default_rng(s)
    a, rho, b = rand_c(rng, n, n), rand_c(rng, n, n), rand_c(rng, n, n)
    lhs = vectorize(a @ rho @ b)
    rhs = np.kron(b.T, a) @ vectorize(rho)
    assert np.allclose(lhs, rhs, atol=1e-12 * max(1.0, np.abs(lhs).max()))


def test_transform_identity_and_invariance():
    x = sample_ginibre(8, SeedSpec(1, 1))
    k = build_kossakowski(x, 3)
    assert np.allclose(transform_kossakowski(k, np.eye(8)), k, atol=1e-15)
    u = sample_haar_unitary(8, SeedSpec(1, 2))
    ku = transform_kossakowski(k, u)
    assert abs(np.trace(ku) - np.trace(k)) <= 1e-10 * abs(np.trace(k))
    assert np.allclose(np.linalg.eigvalsh(ku), np.linalg.eigvalsh(k), atol=1e-8)
    assert np.allclose(ku, u @ k @ u.conj().T, atol=1e-13)


def test_transform_rejects_non_unitary():
    k = np.eye(3, dtype=complex)
    with pytest.raises(InvalidParameterError):
        transform_kossakowski(k, 1.01 * np.eye(3))


def test_transform_heavy_tailed_spectrum():
    n = 9
    m = n * n - 1
    x = sample_student_t_matrix(m, 1.0, SeedSpec(2, 0))
    k = build_kossakowski(x, n)
    u = sample_haar_unitary(m, SeedSpec(2, 1))
    ku = transform_kossakowski(k, u)
    nrm = np.linalg.norm(k, 2)
    assert np.allclose(np.linalg.eigvalsh(ku), np.linalg.eigvalsh(k), atol=1e-8 * nrm)
    # entries are reshuffled even though the spectrum is not
    assert np.max(np.abs(ku - k)) > 1e-3 * nrm
    # same K as building from the mixed interaction matrix
    assert np.allclose(ku, build_kossakowski(u @ x, n), atol=1e-10 * nrm)
