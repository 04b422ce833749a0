"""Biorthonormal eigendecomposition of Liouvillians and the derived spectral metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import svds
from scipy.spatial import cKDTree

from .errors import DecompositionError, InsufficientDataError, InvalidDimensionError, InvalidParameterError
from .liouvillian import Superoperator
from .operator_basis import devectorize

__all__ = [
    "SpectralDecomposition",
    "SpectralMetrics",
    "PerturbationResult",
    "Histogram",
    "spectral_norm",
    "decompose",
    "spectral_gap",
    "petermann_factors",
    "q_factors",
    "nn_spacings",
    "steady_state_distance",
    "compute_metrics",
    "empirical_ccdf",
    "pdf_histogram",
    "build_delta_superoperator",
    "perturb_eigenvalues",
    "EIGS_COLUMNS",
    "write_eigenvalue_csv",
    "read_eigenvalue_csv",
]

DEFECT_TOL = 1e-10
EXACT_NORM_LIMIT = 900


def spectral_norm(mat: np.ndarray) -> float:
    """Largest singular value; ARPACK for large matrices."""
    mat = np.asarray(mat)
    if not mat.size or not np.any(mat):
        return 0.0
    if max(mat.shape) <= EXACT_NORM_LIMIT:
        return float(np.linalg.norm(mat, 2))
    s = svds(mat, k=1, return_singular_vectors=False, tol=1e-6, random_state=0)
    return float(s[0])


def _ordering(eigenvalues: np.ndarray) -> np.ndarray:
    # descending Re, then ascending |Im|, then ascending Im
    return np.lexsort((eigenvalues.imag, np.abs(eigenvalues.imag), -eigenvalues.real))


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues with unit-norm right vectors and dual left vectors.

    Column ``m`` of ``right`` / ``left`` belongs to ``eigenvalues[m]``;
    ``left[:, m].conj() @ right[:, m] == 1`` for every unflagged mode.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    flagged: np.ndarray
    norm: float
    fingerprint: str = ""

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def system_dim(self) -> int:
        return math.isqrt(self.dim)

    def overlaps(self) -> np.ndarray:
        """Matrix of ``<L_m | R_n>``."""
        return self.left.conj().T @ self.right

    def invariant_errors(self, matrix: np.ndarray | None = None) -> dict:
        """Measured violations of the decomposition invariants.

        Residuals need the original matrix; pass it to include them.
        """
        ok = ~self.flagged
        gram = self.overlaps()[np.ix_(ok, ok)]
        out = {
            "biorthonormality": float(np.max(np.abs(gram - np.eye(gram.shape[0])), initial=0.0)),
            "zero_mode": float(abs(self.eigenvalues[0])) / max(self.norm, 1e-300),
        }
        lam = self.eigenvalues
        oscillating = np.abs(lam.imag) > 1e-10
        if np.any(oscillating):
            tree = cKDTree(np.column_stack([lam.real, lam.imag]))
            targets = lam[oscillating].conj()
            dist, _ = tree.query(np.column_stack([targets.real, targets.imag]))
            out["conjugate_symmetry"] = float(np.max(dist)) / max(self.norm, 1e-300)
        else:
            out["conjugate_symmetry"] = 0.0
        if matrix is not None:
            res = matrix @ self.right - self.right * lam[np.newaxis, :]
            out["residual"] = float(np.max(np.linalg.norm(res, axis=0))) / max(self.norm, 1e-300)
        return out

    def rescaled(self, factors: np.ndarray) -> "SpectralDecomposition":
        """Copy with ``R_m -> c_m R_m`` and ``L_m -> L_m / conj(c_m)``."""
        factors = np.asarray(factors, dtype=complex)
        return SpectralDecomposition(
            self.eigenvalues,
            self.right * factors[np.newaxis, :],
            self.left / factors.conj()[np.newaxis, :],
            self.flagged,
            self.norm,
            self.fingerprint,
        )


def decompose(op: Superoperator | np.ndarray) -> SpectralDecomposition:
    """Full dense eigendecomposition with left/right pairing and biorthonormal scaling.

    Left vectors come from the same LAPACK ``geev`` call as the right ones,
    so each left vector is already paired with its eigenvalue. Modes whose
    raw overlap ``|<L_m|R_m>|`` (both unit norm) falls below ``1e-10`` are
    flagged as near-defective and left unscaled.
    """
    if isinstance(op, Superoperator):
        mat, fingerprint = op.matrix, op.model_fingerprint
    else:
        mat, fingerprint = np.asarray(op, dtype=complex), ""
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise DecompositionError("matrix has non-finite entries", fingerprint)
    try:
        lam, vl, vr = scipy.linalg.eig(mat, left=True, right=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DecompositionError(f"eigensolver failed: {exc}", fingerprint) from exc
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(vr)) and np.all(np.isfinite(vl))):
        raise DecompositionError("eigensolver returned non-finite values", fingerprint)

    order = _ordering(lam)
    lam, vl, vr = lam[order], vl[:, order], vr[:, order]
    vr = vr / np.linalg.norm(vr, axis=0)[np.newaxis, :]
    vl = vl / np.linalg.norm(vl, axis=0)[np.newaxis, :]
    raw = np.einsum("ij,ij->j", vl.conj(), vr)
    flagged = np.abs(raw) < DEFECT_TOL
    safe = np.where(flagged, 1.0, raw)
    vl = vl / safe.conj()[np.newaxis, :]
    return SpectralDecomposition(lam, vr, vl, flagged, spectral_norm(mat), fingerprint)


def spectral_gap(dec: SpectralDecomposition) -> float:
    return max(0.0, -float(dec.eigenvalues[1].real))


def petermann_factors(dec: SpectralDecomposition) -> np.ndarray:
    """``K_m = <R_m|R_m><L_m|L_m>`` per mode; NaN for flagged modes."""
    k = np.sum(np.abs(dec.right) ** 2, axis=0) * np.sum(np.abs(dec.left) ** 2, axis=0)
    return np.where(dec.flagged, np.nan, k)


def q_factors(dec: SpectralDecomposition) -> np.ndarray:
    """``|Im/(2 Re)|`` per mode; NaN where ``|Re| <= 1e-12 ||L||`` (undefined)."""
    lam = dec.eigenvalues
    defined = np.abs(lam.real) > 1e-12 * dec.norm
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.abs(lam.imag / (2.0 * lam.real))
    return np.where(defined, q, np.nan)


def _nn_distances(lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=complex)
    if lam.size < 2:
        raise InsufficientDataError("need at least two eigenvalues")
    pts = np.column_stack([lam.real, lam.imag])
    dist, _ = cKDTree(pts).query(pts, k=2)
    return dist[:, 1]


def nn_spacings(dec) -> np.ndarray:
    """Nearest-neighbour distance of every eigenvalue in the complex plane.

    Accepts a decomposition or a raw eigenvalue array.
    """
    lam = dec.eigenvalues if isinstance(dec, SpectralDecomposition) else dec
    return _nn_distances(lam)


def steady_state_distance(dec: SpectralDecomposition) -> float:
    """Trace distance between the normalized right zero mode and ``I/N``."""
    rho = devectorize(dec.right[:, 0])
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        return float("nan")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    n = rho.shape[0]
    ev = np.linalg.eigvalsh(rho - np.eye(n) / n)
    return 0.5 * float(np.sum(np.abs(ev)))


@dataclass(frozen=True)
class SpectralMetrics:
    gap: float
    petermann: np.ndarray
    q_factors: np.ndarray
    nn_spacings: np.ndarray
    steady_state_distance: float
    flagged_count: int

    @property
    def mean_petermann(self) -> float:
        return float(np.nanmean(self.petermann))


def compute_metrics(dec: SpectralDecomposition) -> SpectralMetrics:
    return SpectralMetrics(
        gap=spectral_gap(dec),
        petermann=petermann_factors(dec),
        q_factors=q_factors(dec),
        nn_spacings=nn_spacings(dec),
        steady_state_distance=steady_state_distance(dec),
        flagged_count=int(np.sum(dec.flagged)),
    )


def empirical_ccdf(values, grid) -> np.ndarray:
    """Fraction of ``values`` that are ``>= g`` for each ``g`` in ``grid``."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise InsufficientDataError("empirical_ccdf needs at least one value")
    g = np.asarray(grid, dtype=float)
    return 1.0 - np.searchsorted(v, g, side="left") / v.size


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    excluded: int = 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def pdf_histogram(values, bins=50, log: bool = False, range=None) -> Histogram:
    """Density-normalized histogram; ``log=True`` uses log-spaced bins.

    Under log binning non-positive values are dropped and counted in
    ``excluded``. ``bins`` may be a count or explicit edges.
    """
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise InsufficientDataError("pdf_histogram needs at least one value")
    excluded = 0
    if log:
        excluded = int(np.sum(v <= 0))
        v = v[v > 0]
        if v.size == 0:
            raise InsufficientDataError("no positive values for logarithmic binning")
        if np.ndim(bins) == 0:
            lo, hi = range if range is not None else (v.min(), v.max())
            if hi <= lo:
                hi = lo * (1 + 1e-9) + 1e-300
            bins = np.geomspace(lo, hi, int(bins) + 1)
    density, edges = np.histogram(v, bins=bins, range=None if log else range)
    widths = np.diff(edges)
    total = density.sum()
    density = density / (total * widths) if total else density.astype(float)
    return Histogram(edges, density, excluded)


def build_delta_superoperator(V: np.ndarray, hbar: float = 1.0) -> Superoperator:
    """``-(i/hbar)(I (x) V - V^T (x) I)``: the superoperator change from ``H -> H + V``."""
    V = np.asarray(V, dtype=complex)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise InvalidDimensionError(f"V must be square, got {V.shape}")
    if np.max(np.abs(V - V.conj().T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(V), initial=0.0)):
        raise InvalidParameterError("V must be Hermitian")
    if not hbar > 0:
        raise InvalidParameterError("hbar must be positive")
    eye = np.eye(V.shape[0])
    return Superoperator((-1j / hbar) * (np.kron(eye, V) - np.kron(V.T, eye)))


@dataclass(frozen=True)
class PerturbationResult:
    first_order: np.ndarray
    second_order: np.ndarray
    excluded_pairs: int

    @property
    def shifts(self) -> np.ndarray:
        return self.first_order + self.second_order


def perturb_eigenvalues(dec: SpectralDecomposition, dL) -> PerturbationResult:
    """Eigenvalue shifts through second order in ``dL``.

    Pairs with ``|lambda_m - lambda_n| < 1e-12 ||L||`` are dropped from the
    second-order sum and counted in ``excluded_pairs``.
    """
    mat = dL.matrix if isinstance(dL, Superoperator) else np.asarray(dL, dtype=complex)
    if mat.shape != (dec.dim, dec.dim):
        raise InvalidDimensionError(f"perturbation shape {mat.shape} does not match dimension {dec.dim}")
    coupling = dec.left.conj().T @ mat @ dec.right
    first = np.diag(coupling).copy()
    lam = dec.eigenvalues
    diff = lam[:, np.newaxis] - lam[np.newaxis, :]
    guard = np.abs(diff) < 1e-12 * dec.norm
    np.fill_diagonal(guard, True)
    excluded = int(np.sum(guard)) - dec.dim
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(guard, 0.0, coupling * coupling.T / np.where(guard, 1.0, diff))
    second = terms.sum(axis=1)
    first = np.where(dec.flagged, np.nan, first)
    second = np.where(dec.flagged, np.nan, second)
    return PerturbationResult(first, second, excluded // 2 if excluded > 0 else 0)


EIGS_COLUMNS = ("realization_id", "mode_index", "re_lambda", "im_lambda", "petermann", "q_factor", "nn_spacing", "flagged")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_eigenvalue_csv(path, realization_id: str, dec: SpectralDecomposition, metrics: SpectralMetrics) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EIGS_COLUMNS)
        lam = dec.eigenvalues
        for m in range(dec.dim):
            writer.writerow(
                [
                    realization_id,
                    m,
                    _fmt(lam[m].real),
                    _fmt(lam[m].imag),
                    _fmt(metrics.petermann[m]),
                    _fmt(metrics.q_factors[m]),
                    _fmt(metrics.nn_spacings[m]),
                    int(dec.flagged[m]),
                ]
            )


def read_eigenvalue_csv(path) -> dict:
    """Column arrays from an eigenvalue dump."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {"realization_id": [r["realization_id"] for r in rows]}
    out["mode_index"] = np.array([int(r["mode_index"]) for r in rows])
    for col in ("re_lambda", "im_lambda", "petermann", "q_factor", "nn_spacing"):
        out[col] = np.array([float(r[col]) for r in rows])
    out["flagged"] = np.array([bool(int(r["flagged"])) for r in rows])
    return out
