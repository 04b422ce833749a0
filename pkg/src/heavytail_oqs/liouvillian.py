"""Lindblad models, their Liouville superoperators, and a direct RHS evaluator.

The superoperator uses the column-stacking convention of
:func:`heavytail_oqs.operator_basis.vectorize`, so that
``vec(A rho B) = kron(B.T, A) @ vec(rho)``.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidDimensionError, ModelValidationError
from .operator_basis import GeneratorBasis, su_generators

__all__ = [
    "LindbladModel",
    "Superoperator",
    "build_superoperator",
    "jump_operators",
    "apply_rhs_direct",
    "write_superoperator",
    "read_superoperator",
]

_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Everything needed to write down one GKSL generator.

    ``kossakowski`` is indexed in the order of ``basis``. Construction
    validates Hermiticity of ``H``, Hermiticity/PSD and ``Tr[K] = N`` for
    ``K``, and basis consistency; :meth:`unchecked` skips this for analytic
    test cases such as ``K = 0``.
    """

    hamiltonian: np.ndarray
    kossakowski: np.ndarray
    basis: GeneratorBasis | None = None
    alpha: float = 1.0
    hbar: float = 1.0
    _validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        k = np.asarray(self.kossakowski, dtype=complex)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "kossakowski", k)
        if self.basis is None:
            if h.ndim != 2:
                raise InvalidDimensionError(f"hamiltonian must be a matrix, got shape {h.shape}")
            object.__setattr__(self, "basis", su_generators(h.shape[0]))
        if self._validate:
            failures = self.check()
            if failures:
                raise ModelValidationError(failures)

    @classmethod
    def unchecked(cls, hamiltonian, kossakowski, basis=None, alpha=1.0, hbar=1.0) -> "LindbladModel":
        """Test-only constructor that skips invariant validation."""
        return cls(hamiltonian, kossakowski, basis, alpha, hbar, _validate=False)

    @property
    def system_dim(self) -> int:
        return self.basis.system_dim

    def check(self) -> list[str]:
        """Names of every violated invariant (empty when valid)."""
        n = self.basis.system_dim
        m = n * n - 1
        h, k = self.hamiltonian, self.kossakowski
        failures = []
        if len(self.basis) != m:
            failures.append(f"basis has {len(self.basis)} generators, expected {m}")
        if h.shape != (n, n):
            failures.append(f"hamiltonian shape {h.shape} != ({n}, {n})")
        elif np.max(np.abs(h - h.conj().T), initial=0.0) > _TOL * max(1.0, np.max(np.abs(h), initial=0.0)):
            failures.append("hamiltonian not Hermitian")
        if k.shape != (m, m):
            failures.append(f"kossakowski shape {k.shape} != ({m}, {m})")
        else:
            scale = max(1.0, float(np.max(np.abs(k), initial=0.0)))
            if np.max(np.abs(k - k.conj().T), initial=0.0) > _TOL * scale:
                failures.append("kossakowski not Hermitian")
            else:
                lo = float(np.linalg.eigvalsh(0.5 * (k + k.conj().T))[0]) if m else 0.0
                if lo < -_TOL * scale:
                    failures.append(f"kossakowski not PSD (min eigenvalue {lo:.3e})")
            tr = complex(np.trace(k))
            if abs(tr - n) > _TOL * n:
                failures.append(f"Tr[K] = {tr.real:.12g} != N = {n}")
        if not self.alpha >= 0:
            failures.append(f"alpha must be non-negative, got {self.alpha}")
        if not self.hbar > 0:
            failures.append(f"hbar must be positive, got {self.hbar}")
        return failures

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(struct.pack("<qdd", self.system_dim, float(self.alpha), float(self.hbar)))
        digest.update(np.ascontiguousarray(self.hamiltonian, dtype=np.complex128).tobytes())
        digest.update(np.ascontiguousarray(self.kossakowski, dtype=np.complex128).tobytes())
        return digest.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Superoperator:
    matrix: np.ndarray
    model_fingerprint: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimensionError(f"superoperator must be square, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def system_dim(self) -> int:
        return int(round(self.dim ** 0.5))

    def __matmul__(self, other):
        return self.matrix @ other

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix - other.matrix)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix + other.matrix)


def jump_operators(model: LindbladModel, cutoff: float = 1e-12):
    """Rates ``c_a`` and operators ``J_a = sum_l conj(v_a)_l S_l`` from ``K = sum c_a v_a v_a^dagger``.

    Eigenvalues below ``cutoff * N`` are dropped.
    """
    k = model.kossakowski
    k = 0.5 * (k + k.conj().T)
    rates, vecs = np.linalg.eigh(k)
    keep = rates > cutoff * model.system_dim
    rates, vecs = rates[keep], vecs[:, keep]
    ops = np.einsum("la,lij->aij", vecs.conj(), model.basis.generators)
    return rates, ops


def build_superoperator(model: LindbladModel) -> Superoperator:
    n = model.system_dim
    eye = np.eye(n)
    h = model.hamiltonian
    mat = (-1j / model.hbar) * (np.kron(eye, h) - np.kron(h.T, eye))

    rates, ops = jump_operators(model)
    if rates.size:
        scaled = np.sqrt(rates)[:, None, None] * ops
        # sum_a conj(J_a) (x) J_a, assembled as one GEMM then reindexed:
        # kron(A, B)[(p, q), (r, s)] = A[p, r] B[q, s]
        left = scaled.conj().reshape(rates.size, n * n)
        right = scaled.reshape(rates.size, n * n)
        jump = (left.T @ right).reshape(n, n, n, n).transpose(0, 2, 1, 3).reshape(n * n, n * n)
        decay = np.einsum("aji,ajk->ik", scaled.conj(), scaled)  # sum_a J_a^dagger J_a
        diss = jump - 0.5 * (np.kron(eye, decay) + np.kron(decay.T, eye))
        mat = mat + (model.alpha / model.hbar) ** 2 * diss
    return Superoperator(mat, model.fingerprint())


def apply_rhs_direct(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """``d rho / dt`` evaluated term by term from the double sum over ``gamma_kl``."""
    rho = np.asarray(rho, dtype=complex)
    n = model.system_dim
    if rho.shape != (n, n):
        raise InvalidDimensionError(f"rho must be {n}x{n}, got {rho.shape}")
    s = model.basis.generators
    gamma = model.kossakowski
    h = model.hamiltonian
    out = (-1j / model.hbar) * (h @ rho - rho @ h)
    s_rho = np.einsum("lij,jk->lik", s, rho)
    sandwich = np.einsum("kl,lij,kmj->im", gamma, s_rho, s.conj())  # S_l rho S_k^dagger
    decay = np.einsum("kl,kji,ljm->im", gamma, s.conj(), s)  # S_k^dagger S_l
    out = out + (model.alpha / model.hbar) ** 2 * (sandwich - 0.5 * (decay @ rho + rho @ decay))
    return out


def write_superoperator(path, op: Superoperator) -> None:
    """Dump as one little-endian uint64 dimension then row-major complex128 entries."""
    mat = np.ascontiguousarray(op.matrix, dtype="<c16")
    with open(Path(path), "wb") as fh:
        fh.write(struct.pack("<Q", op.dim))
        fh.write(mat.tobytes(order="C"))


def read_superoperator(path) -> Superoperator:
    raw = Path(path).read_bytes()
    (dim,) = struct.unpack_from("<Q", raw, 0)
    expected = 8 + 16 * dim * dim
    if len(raw) != expected:
        raise InvalidDimensionError(f"dump has {len(raw)} bytes, expected {expected} for dim {dim}")
    mat = np.frombuffer(raw, dtype="<c16", offset=8).reshape(dim, dim).astype(np.complex128)
    return Superoperator(mat)
