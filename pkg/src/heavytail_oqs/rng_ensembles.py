"""Seed-addressable samplers for every random object in the model.

All samplers are pure functions of their parameters and a :class:`SeedSpec`.
Each ``SeedSpec`` maps to an independent PCG64 substream through
``numpy.random.SeedSequence`` spawn keys, so realizations can be generated in
any order (or in parallel) without shifting each other's draws.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    InvalidDimensionError,
    InvalidParameterError,
)

__all__ = [
    "SeedSpec",
    "TailRegime",
    "sample_ginibre",
    "sample_student_t_matrix",
    "student_t_pdf",
    "gaussian_pdf",
    "classify_tail_regime",
    "build_kossakowski",
    "sample_gue_hamiltonian",
    "sample_haar_unitary",
    "sample_haar_pure_state",
    "estimate_tail_index",
    "hamiltonian_normalization",
]

_UINT64_MAX = 2**64 - 1


@dataclass(frozen=True)
class SeedSpec:
    """Address of one independent random substream."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _UINT64_MAX:
            raise InvalidParameterError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        if int(self.stream_index) < 0:
            raise InvalidParameterError(f"stream_index must be non-negative, got {self.stream_index}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.PCG64(seq))


class TailRegime(str, enum.Enum):
    EHT = "EHT"  # infinite variance
    HT = "HT"  # finite variance, infinite kurtosis
    MHT = "MHT"  # finite kurtosis, heavier than Gaussian
    LT = "LT"  # effectively Gaussian


def _check_dim(n) -> int:
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def _check_nu(nu) -> float:
    nu = float(nu)
    if not nu > 0 or not math.isfinite(nu):
        raise InvalidParameterError(f"nu must be a positive finite real, got {nu!r}")
    return nu


def _ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    scale = math.sqrt(0.5)
    re = rng.normal(0.0, scale, size=(rows, cols))
    im = rng.normal(0.0, scale, size=(rows, cols))
    return re + 1j * im


def sample_ginibre(n: int, seed: SeedSpec) -> np.ndarray:
    """Draw an ``n x n`` GinUE matrix.

    Real and imaginary parts of every entry are independent N(0, 1/2), i.e.
    density ``exp(-x**2) / sqrt(pi)``.
    """
    n = _check_dim(n)
    return _ginibre(seed.generator(), n, n)


def _student_t_parts(rng: np.random.Generator, nu: float, shape) -> np.ndarray:
    # Gaussian scale mixture: G / sqrt(W / nu) with W ~ chi2(nu) = Gamma(nu/2, scale 2).
    # numpy's standard_gamma is exact for shape < 1, which nu = 1 needs.
    g = rng.standard_normal(shape)
    w = 2.0 * rng.standard_gamma(nu / 2.0, shape)
    return g / np.sqrt(2.0 * w / nu)


def sample_student_t_matrix(n: int, nu: float, seed: SeedSpec) -> np.ndarray:
    """Draw an ``n x n`` complex matrix with Student's-t real and imaginary parts.

    Each part equals ``G / sqrt(2 W / nu)`` with ``G ~ N(0, 1)`` and
    ``W ~ chi2(nu)``, all mutually independent; its variance (for nu > 2) is
    ``nu / (2 (nu - 2))``.
    """
    n = _check_dim(n)
    nu = _check_nu(nu)
    rng = seed.generator()
    re = _student_t_parts(rng, nu, (n, n))
    im = _student_t_parts(rng, nu, (n, n))
    return re + 1j * im


def student_t_pdf(x, nu: float):
    """Density of one real/imaginary part of a t-distributed entry.

    ``sqrt(2/(nu pi)) Gamma((nu+1)/2) / Gamma(nu/2) (1 + 2 x^2 / nu)^(-(nu+1)/2)``;
    accepts scalars or arrays.
    """
    nu = _check_nu(nu)
    x = np.asarray(x, dtype=float)
    log_norm = 0.5 * math.log(2.0 / (nu * math.pi)) + gammaln((nu + 1) / 2) - gammaln(nu / 2)
    out = np.exp(log_norm - 0.5 * (nu + 1) * np.log1p(2.0 * x * x / nu))
    return out if out.ndim else float(out)


def gaussian_pdf(x):
    """GinUE entry-part density ``exp(-x^2)/sqrt(pi)``."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-x * x) / math.sqrt(math.pi)
    return out if out.ndim else float(out)


def classify_tail_regime(nu: float) -> TailRegime:
    nu = _check_nu(nu)
    if nu <= 2:
        return TailRegime.EHT
    if nu <= 4:
        return TailRegime.HT
    if nu <= 30:
        return TailRegime.MHT
    return TailRegime.LT


def build_kossakowski(X: np.ndarray, system_dim: int) -> np.ndarray:
    """Normalized Gram matrix ``K = N X X^dagger / Tr[X X^dagger]``.

    Args:
        X: square ``(N^2 - 1) x (N^2 - 1)`` complex matrix.
        system_dim: Hilbert-space dimension ``N``.

    Returns:
        Hermitian PSD matrix with trace exactly ``N`` up to rounding.
    """
    X = np.asarray(X, dtype=complex)
    n = _check_dim(system_dim)
    m = n * n - 1
    if X.shape != (m, m):
        raise InvalidDimensionError(f"X must be {m}x{m} for N={n}, got {X.shape}")
    gram = X @ X.conj().T
    gram = 0.5 * (gram + gram.conj().T)
    trace = float(np.trace(gram).real)
    if not trace > 0 or not math.isfinite(trace):
        raise DegenerateInputError("Tr[X X^dagger] must be positive and finite")
    return (n / trace) * gram


def sample_gue_hamiltonian(n: int, seed: SeedSpec) -> np.ndarray:
    """GUE Hamiltonian ``(X + X^dagger) / sqrt(2n)`` from one GinUE draw.

    Note that with unit-variance Ginibre entries this gives
    ``<Tr H^2> = n``; see :func:`hamiltonian_normalization`.
    """
    n = _check_dim(n)
    x = sample_ginibre(n, seed)
    h = (x + x.conj().T) / math.sqrt(2 * n)
    # exact Hermiticity: mirror the upper triangle
    upper = np.triu(h, 1)
    return upper + upper.conj().T + np.diag(np.diag(h).real)


def sample_haar_unitary(n: int, seed: SeedSpec) -> np.ndarray:
    """Haar unitary via QR of a Ginibre draw with diagonal-phase correction."""
    n = _check_dim(n)
    q, r = np.linalg.qr(_ginibre(seed.generator(), n, n))
    d = np.diag(r)
    phases = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * phases[np.newaxis, :]


def sample_haar_pure_state(n: int, seed: SeedSpec) -> np.ndarray:
    """Density operator of the first column of a Haar unitary."""
    psi = sample_haar_unitary(n, seed)[:, 0]
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def estimate_tail_index(samples, k: int | None = None) -> float:
    """Hill estimate of the power-law exponent of ``P(|x| > t)``.

    Zeros are dropped before ranking. ``k`` (number of upper order statistics)
    defaults to ``ceil(sqrt(count))``.
    """
    a = np.abs(np.asarray(samples, dtype=float).ravel())
    a = a[a > 0]
    if k is None:
        k = max(10, math.ceil(math.sqrt(a.size)))
    k = int(k)
    if k < 10:
        raise InvalidParameterError(f"k must be at least 10, got {k}")
    if a.size < k + 1:
        raise InsufficientDataError(f"need at least {k + 1} nonzero samples, got {a.size}")
    top = -np.partition(-a, k)[: k + 1]
    top.sort()
    top = top[::-1]
    logs = np.log(top[:k] / top[k])
    return float(k / logs.sum())


def hamiltonian_normalization(n: int, seeds: Sequence[SeedSpec]) -> dict:
    """Monte Carlo ``<Tr[H^2]>`` for the GUE construction, with its standard error."""
    vals = np.array([np.trace(h @ h).real for h in (sample_gue_hamiltonian(n, s) for s in seeds)])
    return {
        "n": int(n),
        "draws": int(vals.size),
        "mean_tr_h2": float(vals.mean()),
        "stderr": float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan"),
        "stated_value": 1.0 / n,
    }
