"""SU(N) generator basis, column-stacking vectorization, and basis changes of K."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError

__all__ = [
    "GeneratorBasis",
    "su_generators",
    "vectorize",
    "devectorize",
    "transform_kossakowski",
]


@dataclass(frozen=True, eq=False)
class GeneratorBasis:
    """Ordered generalized Gell-Mann matrices for SU(N).

    ``generators`` has shape ``(N^2 - 1, N, N)``. Ordering: all symmetric
    pairs, then all antisymmetric pairs (both lexicographic in ``j < k``),
    then the ``N - 1`` diagonal matrices.
    """

    system_dim: int
    generators: np.ndarray

    def __len__(self):
        return self.generators.shape[0]

    def __getitem__(self, idx):
        return self.generators[idx]

    def coefficients(self, op: np.ndarray) -> np.ndarray:
        """Hilbert-Schmidt components ``Tr[S_k^dagger op]``."""
        return np.einsum("kji,ji->k", self.generators.conj(), op)


@lru_cache(maxsize=8)
def _gell_mann(n: int) -> np.ndarray:
    m = n * n - 1
    gens = np.zeros((m, n, n), dtype=complex)
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    s = 1.0 / math.sqrt(2.0)
    idx = 0
    for j, k in pairs:
        gens[idx, j, k] = gens[idx, k, j] = s
        idx += 1
    for j, k in pairs:
        gens[idx, j, k] = -1j * s
        gens[idx, k, j] = 1j * s
        idx += 1
    for l in range(1, n):
        diag = np.zeros(n)
        diag[:l] = 1.0
        diag[l] = -float(l)
        gens[idx] = np.diag(diag / math.sqrt(l * (l + 1)))
        idx += 1
    gens.setflags(write=False)
    return gens


def su_generators(n: int) -> GeneratorBasis:
    if int(n) != n or n < 2:
        raise InvalidDimensionError(f"SU(N) basis needs N >= 2, got {n!r}")
    return GeneratorBasis(int(n), _gell_mann(int(n)))


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack ``rho``: entry ``(i, j)`` lands at ``j * N + i``."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1:
        raise InvalidDimensionError(f"expected a 1-d vector, got shape {v.shape}")
    n = math.isqrt(v.size)
    if n * n != v.size:
        raise InvalidDimensionError(f"vector length {v.size} is not a perfect square")
    return v.reshape(n, n, order="F")


def transform_kossakowski(K: np.ndarray, U: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """Return ``U K U^dagger`` after checking that ``U`` is unitary."""
    K = np.asarray(K, dtype=complex)
    U = np.asarray(U, dtype=complex)
    if K.shape != U.shape or K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidDimensionError(f"K {K.shape} and U {U.shape} must be equal square shapes")
    err = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if err > atol:
        raise InvalidParameterError(f"U is not unitary (max |U^dagger U - I| = {err:.3e})")
    out = U @ K @ U.conj().T
    return 0.5 * (out + out.conj().T)
