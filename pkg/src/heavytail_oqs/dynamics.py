"""Spectral propagation of density matrices, coherence/entropy series, and T2 fits."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import InsufficientDataError, InsufficientSpanError, InvalidParameterError, InvalidStateError
from .operator_basis import vectorize
from .rng_ensembles import SeedSpec, sample_gue_hamiltonian
from .spectral_analysis import SpectralDecomposition

__all__ = [
    "TimeGrid",
    "Evolution",
    "TrajectoryRecord",
    "FitResult",
    "SensitivityMetrics",
    "evolve",
    "von_neumann_entropy",
    "relative_entropy_coherence",
    "trajectory",
    "fit_coherence_time",
    "coherence_perturbation_metrics",
    "make_perturbation",
    "choose_time_grid",
    "UnreliablePropagationWarning",
]

ENTROPY_CUTOFF = 1e-14
CE_FLOOR = 1e-12
TIME_CAP = 1e6


class UnreliablePropagationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray
    no_decay: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise InvalidParameterError("time grid must be a non-empty 1-d array")
        if pts[0] != 0.0:
            raise InvalidParameterError(f"time grid must start at 0, starts at {pts[0]}")
        if np.any(np.diff(pts) <= 0):
            raise InvalidParameterError("time grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, t_end: float, points: int, no_decay: bool = False) -> "TimeGrid":
        return cls(np.linspace(0.0, float(t_end), int(points)), no_decay)

    def __len__(self):
        return self.points.size


def _as_points(grid) -> np.ndarray:
    return grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)


def _check_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidStateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise InvalidStateError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -tol:
        raise InvalidStateError("density matrix is not positive semidefinite")


@dataclass
class Evolution:
    """Propagated states ``(T, N, N)`` after Hermitian symmetrization."""

    times: np.ndarray
    states: np.ndarray
    antihermitian_residual: float
    flagged_weight: float
    warnings: list = field(default_factory=list)


def _mode_coefficients(dec: SpectralDecomposition, rho0: np.ndarray) -> np.ndarray:
    return dec.left.conj().T @ vectorize(rho0)


def _propagate(dec: SpectralDecomposition, coeffs: np.ndarray, times: np.ndarray) -> np.ndarray:
    n = dec.system_dim
    phases = np.exp(np.outer(dec.eigenvalues, times))
    vecs = dec.right @ (phases * coeffs[:, np.newaxis])
    # column t of vecs is a column-stacked N x N matrix
    return vecs.T.reshape(times.size, n, n).transpose(0, 2, 1)


def evolve(dec: SpectralDecomposition, rho0: np.ndarray, grid) -> Evolution:
    """``rho(t) = sum_m exp(lambda_m t) R_m <L_m|rho0>`` on every grid point."""
    rho0 = np.asarray(rho0, dtype=complex)
    _check_density_matrix(rho0)
    if rho0.shape[0] ** 2 != dec.dim:
        raise InvalidStateError(f"rho0 dimension {rho0.shape[0]} does not match decomposition dim {dec.dim}")
    times = _as_points(grid)
    coeffs = _mode_coefficients(dec, rho0)
    notes = []
    total = float(np.sum(np.abs(coeffs)))
    flagged_weight = float(np.sum(np.abs(coeffs[dec.flagged]))) / total if total else 0.0
    if flagged_weight > 1e-6:
        msg = f"near-defective modes carry {flagged_weight:.2e} of the initial-state weight"
        notes.append(msg)
        warnings.warn(msg, UnreliablePropagationWarning, stacklevel=2)
    raw = _propagate(dec, coeffs, times)
    herm = 0.5 * (raw + np.conj(np.swapaxes(raw, 1, 2)))
    residual = float(np.max(np.abs(raw - herm))) if raw.size else 0.0
    return Evolution(times, herm, residual, flagged_weight, notes)


def _spectrum(rho: np.ndarray, neg_tol: float) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > 1e-6:
        raise InvalidStateError(f"trace {tr:.9g} deviates from 1 by more than 1e-6")
    p = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if p[0] < -neg_tol:
        raise InvalidStateError(f"eigenvalue {p[0]:.3e} below the tolerated {-neg_tol:.1e}")
    return p


def _shannon(p: np.ndarray) -> float:
    p = p[p > ENTROPY_CUTOFF]
    return float(-np.sum(p * np.log(p)))


def von_neumann_entropy(rho: np.ndarray, neg_tol: float = 1e-8) -> float:
    """``-Tr[rho ln rho]`` in nats."""
    return max(0.0, _shannon(_spectrum(rho, neg_tol)))


def relative_entropy_coherence(rho: np.ndarray, neg_tol: float = 1e-8) -> float:
    """``S(diag rho) - S(rho)`` in nats."""
    p = _spectrum(rho, neg_tol)
    diag = np.clip(np.real(np.diag(rho)), 0.0, None)
    return max(0.0, _shannon(diag) - _shannon(p))


@dataclass
class TrajectoryRecord:
    grid: TimeGrid
    coherence: np.ndarray
    entropy: np.ndarray
    trace_error: float
    positivity_error: float
    antihermitian_residual: float = 0.0
    warnings: list = field(default_factory=list)


def _series(states: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, float]:
    coherence = np.empty(len(states))
    entropy = np.empty(len(states))
    traces = np.real(np.trace(states, axis1=1, axis2=2))
    min_eig = np.inf
    for i, rho in enumerate(states):
        p = np.linalg.eigvalsh(rho)
        min_eig = min(min_eig, float(p[0]))
        s = _shannon(p)
        d = np.clip(np.real(np.diag(rho)), 0.0, None)
        entropy[i] = s
        coherence[i] = _shannon(d) - s
    trace_error = float(np.max(np.abs(traces - 1.0))) if traces.size else 0.0
    positivity = max(0.0, -min_eig) if np.isfinite(min_eig) else 0.0
    return coherence, entropy, trace_error, positivity


def trajectory(dec: SpectralDecomposition, rho0: np.ndarray, grid) -> TrajectoryRecord:
    """Coherence and entropy series of one propagated initial state."""
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    evo = evolve(dec, rho0, grid)
    coherence, entropy, trace_error, positivity = _series(evo.states)
    return TrajectoryRecord(grid, coherence, entropy, trace_error, positivity, evo.antihermitian_residual, evo.warnings)


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    coherence_time: float
    offset: float
    rms_residual: float
    converged: bool
    iterations: int = 0

    @property
    def T2(self) -> float:
        return self.coherence_time


def _initial_guess(t: np.ndarray, c: np.ndarray) -> tuple[float, float, float]:
    amp = float(c[0] - c[-1])
    off = float(c[-1])
    below = np.nonzero(c < off + amp / math.e)[0]
    t2 = float(t[below[0]]) if below.size and t[below[0]] > 0 else 0.5 * float(t[-1] - t[0])
    return amp, t2, off


def fit_coherence_time(grid, coherence, max_iterations: int = 200, xtol: float = 1e-8) -> FitResult:
    """Least-squares fit of ``A exp(-t/T2) + C0``.

    Never raises on non-convergence: the result carries ``converged=False``
    and the best parameters found.
    """
    t = _as_points(grid)
    c = np.asarray(coherence, dtype=float)
    if t.size != c.size:
        raise InvalidParameterError(f"grid has {t.size} points but series has {c.size}")
    if t.size < 8:
        raise InsufficientDataError(f"need at least 8 points, got {t.size}")
    amp, t2, off = _initial_guess(t, c)
    spread = float(np.ptp(c))
    if not np.all(np.isfinite(c)) or spread <= 1e-12 * max(1.0, float(np.max(np.abs(c)))):
        rms = float(np.sqrt(np.mean((c - np.mean(c)) ** 2))) if np.all(np.isfinite(c)) else float("nan")
        return FitResult(0.0, t2, float(np.mean(c)), rms, False, 0)

    # work in units of the grid span so the three parameters are comparable
    span = float(t[-1]) if t[-1] > 0 else 1.0
    tau = t / span

    def residual(p):
        return p[0] * np.exp(-tau / p[1]) + p[2] - c

    def jacobian(p):
        e = np.exp(-tau / p[1])
        return np.column_stack([e, p[0] * e * tau / p[1] ** 2, np.ones_like(tau)])

    x0 = np.array([amp, max(t2 / span, 1e-9), off])
    try:
        res = least_squares(
            residual,
            x0,
            jac=jacobian,
            bounds=([-np.inf, 1e-12, -np.inf], [np.inf, np.inf, np.inf]),
            method="trf",
            xtol=xtol,
            ftol=None,
            gtol=None,
            max_nfev=max_iterations,
            x_scale="jac",
        )
    except (ValueError, np.linalg.LinAlgError):
        return FitResult(amp, t2, off, float("nan"), False, 0)
    a, t2_fit, c0 = res.x
    t2_fit *= span
    rms = float(np.sqrt(np.mean(res.fun**2)))
    converged = bool(res.status == 3 and np.isfinite(t2_fit) and t2_fit > 0)
    return FitResult(float(a), float(t2_fit), float(c0), rms, converged, int(res.nfev))


@dataclass(frozen=True)
class SensitivityMetrics:
    delta_T2: float
    delta_T2_relative: float
    delta_CE: float
    T2_reference: float
    T2_perturbed: float


def coherence_perturbation_metrics(c0, cv, grid, t2_ref: float, t2_perturbed: float | None = None) -> SensitivityMetrics:
    """Coherence-time shift and the time-averaged squared log-ratio of two C_E series.

    ``delta_CE = (1/(2 T2)) int_0^{2 T2} ln(C_E^V / C_E^0)^2 dt`` by the
    trapezoid rule, with both series floored at 1e-12. ``T2`` of the
    perturbed series is fitted on ``grid`` unless ``t2_perturbed`` is given.
    """
    t = _as_points(grid)
    c0 = np.asarray(c0, dtype=float)
    cv = np.asarray(cv, dtype=float)
    if c0.shape != t.shape or cv.shape != t.shape:
        raise InvalidParameterError("both series must live on the grid")
    if not t2_ref > 0:
        raise InvalidParameterError(f"t2_ref must be positive, got {t2_ref}")
    end = 2.0 * t2_ref
    if t[-1] < end * (1 - 1e-12):
        raise InsufficientSpanError(f"grid ends at {t[-1]:.6g} but the average needs [0, {end:.6g}]")
    integrand = np.log(np.maximum(cv, CE_FLOOR) / np.maximum(c0, CE_FLOOR)) ** 2
    inside = t < end
    ts = np.append(t[inside], end)
    ys = np.append(integrand[inside], np.interp(end, t, integrand))
    delta_ce = float(np.trapezoid(ys, ts) / end)
    if t2_perturbed is None:
        t2_perturbed = fit_coherence_time(t, cv).coherence_time
    d_t2 = abs(t2_perturbed - t2_ref)
    return SensitivityMetrics(d_t2, d_t2 / t2_ref, delta_ce, float(t2_ref), float(t2_perturbed))


def make_perturbation(n: int, seed: SeedSpec, h0_seed: SeedSpec | None = None, scale: float = 0.1,
                      amplitude: float = 1.0) -> np.ndarray:
    """GUE perturbation ``V = scale * amplitude * G`` from its own substream.

    ``amplitude`` must match whatever rescaling was applied to ``H0``.
    """
    if n < 2:
        raise InvalidParameterError(f"perturbation needs n >= 2, got {n}")
    if h0_seed is not None and h0_seed == seed:
        raise InvalidParameterError("perturbation must use a substream distinct from H0")
    return (scale * amplitude) * sample_gue_hamiltonian(n, seed)


def _stationary_coherence(dec: SpectralDecomposition, coeffs: np.ndarray) -> float:
    stationary = np.abs(dec.eigenvalues) <= 1e-10 * max(dec.norm, 1.0)
    c = np.where(stationary, coeffs, 0.0)
    rho = _propagate(dec, c, np.zeros(1))[0]
    return _coherence_of(rho)


def _coherence_of(rho: np.ndarray) -> float:
    rho = 0.5 * (rho + rho.conj().T)
    p = np.linalg.eigvalsh(rho)
    d = np.clip(np.real(np.diag(rho)), 0.0, None)
    return _shannon(d) - _shannon(p)


def choose_time_grid(dec: SpectralDecomposition, rho0: np.ndarray, target_points: int = 400,
                     threshold: float = 1e-3, cap: float = TIME_CAP) -> TimeGrid:
    """Uniform grid on ``[0, t_end]`` long enough for ``rho0``'s coherence to settle.

    Starting from ``10 / |median Re lambda|``, ``t_end`` doubles until
    ``C_E(t_end)`` is within ``threshold`` of its full drop towards the
    stationary value, or below ``threshold * C_E(0)``; otherwise it stops at
    ``cap`` and the grid is marked ``no_decay``.
    """
    coeffs = _mode_coefficients(dec, np.asarray(rho0, dtype=complex))
    c_start = _coherence_of(_propagate(dec, coeffs, np.zeros(1))[0])
    c_inf = _stationary_coherence(dec, coeffs)
    drop = abs(c_start - c_inf)
    median_rate = abs(float(np.median(dec.eigenvalues.real)))
    if median_rate <= 1e-12 * max(dec.norm, 1.0):
        return TimeGrid.uniform(cap, target_points, no_decay=True)
    t_end = min(10.0 / median_rate, cap)
    while True:
        c_end = _coherence_of(_propagate(dec, coeffs, np.array([t_end]))[0])
        if drop <= 1e-12 or abs(c_end - c_inf) <= threshold * drop or c_end < threshold * c_start:
            return TimeGrid.uniform(t_end, target_points)
        if t_end >= cap:
            return TimeGrid.uniform(cap, target_points, no_decay=True)
        t_end = min(2.0 * t_end, cap)
