"""Fast oracle and invariant checks, shared by the ``verify`` command and the tests.

Every check is deterministic (fixed seeds) and returns a :class:`CheckResult`
carrying the measured quantities next to the thresholds they were held to.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import xlogy

from .dynamics import (
    TimeGrid,
    coherence_perturbation_metrics,
    evolve,
    fit_coherence_time,
    trajectory,
)
from .liouvillian import LindbladModel, Superoperator, apply_rhs_direct, build_superoperator
from .operator_basis import devectorize, vectorize
from .rng_ensembles import (
    SeedSpec,
    build_kossakowski,
    estimate_tail_index,
    sample_ginibre,
    sample_gue_hamiltonian,
    sample_haar_pure_state,
    sample_haar_unitary,
    sample_student_t_matrix,
)
from .spectral_analysis import (
    build_delta_superoperator,
    decompose,
    petermann_factors,
    perturb_eigenvalues,
    spectral_norm,
)

VERIFY_SEED = 20240601
MIX_DIM = 4


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.criterion}: {self.name} ({shown}; {self.elapsed:.2f}s)"

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "passed": self.passed,
                "details": self.details, "elapsed_s": self.elapsed}


def _short(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return v


def _seed(i: int) -> SeedSpec:
    return SeedSpec(VERIFY_SEED, i)


def random_model(n: int, seed_base: int, nu: float | None = None, hamiltonian: bool = True,
                 alpha: float = 1.0, hbar: float = 1.0) -> LindbladModel:
    """Random valid model: Wishart-type K from ``nu`` (GinUE if None) and optional GUE H."""
    m = n * n - 1
    if nu is None:
        x = sample_ginibre(m, _seed(seed_base))
    else:
        x = sample_student_t_matrix(m, nu, _seed(seed_base))
    h = sample_gue_hamiltonian(n, _seed(seed_base + 1)) if hamiltonian else np.zeros((n, n), complex)
    return LindbladModel(h, build_kossakowski(x, n), alpha=alpha, hbar=hbar)


def random_density_matrix(n: int, seed: SeedSpec) -> np.ndarray:
    g = sample_ginibre(n, seed)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def binary_entropy(p):
    return -(xlogy(p, p) + xlogy(1 - p, 1 - p))


def _timed(criterion: int, name: str, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, details = fn()
    return CheckResult(criterion, name, bool(passed), details, time.perf_counter() - t0)


def check_superoperator_equivalence(samples: int = 100, tol: float = 1e-10, budget: float = 10.0) -> CheckResult:
    def run():
        worst = 0.0
        for i in range(samples):
            n = 2 + i % 4
            nu = (None, 1.0, 2.0, 3.5)[(i // 4) % 4]
            alpha = 1.0 if i % 3 else 0.7
            hbar = 1.0 if i % 5 else 1.3
            model = random_model(n, 1000 + 10 * i, nu, hamiltonian=i % 2 == 0, alpha=alpha, hbar=hbar)
            rho = random_density_matrix(n, _seed(5000 + i))
            lhs = build_superoperator(model) @ vectorize(rho)
            rhs = vectorize(apply_rhs_direct(model, rho))
            worst = max(worst, float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300)))
        return worst <= tol, {"max_relative_error": worst, "tol": tol, "samples": samples}

    res = _timed(1, "superoperator equals the direct master-equation right-hand side", run)
    res.details["budget_s"] = budget
    res.passed = res.passed and res.elapsed < budget
    return res


def dephasing_model() -> LindbladModel:
    return LindbladModel(np.zeros((2, 2), complex), np.diag([0.0, 0.0, 2.0]).astype(complex))


def check_analytic_dephasing() -> CheckResult:
    def run():
        dec = decompose(build_superoperator(dephasing_model()))
        spec_err = float(np.max(np.abs(np.sort_complex(dec.eigenvalues) - np.array([-2, -2, 0, 0]))))
        plus = np.full((2, 2), 0.5, dtype=complex)
        t = np.linspace(0.0, 5.0, 201)
        evo = evolve(dec, plus, TimeGrid(t))
        offdiag = evo.states[:, 0, 1]
        decay_err = float(np.max(np.abs(offdiag - 0.5 * np.exp(-2 * t))))
        rec = trajectory(dec, plus, TimeGrid(t))
        closed = math.log(2) - binary_entropy((1 + np.exp(-2 * t)) / 2)
        ce_err = float(np.max(np.abs(rec.coherence - closed)))
        ok = spec_err <= 1e-10 and decay_err <= 1e-8 and ce_err <= 1e-8
        return ok, {"spectrum_error": spec_err, "offdiag_error": decay_err, "coherence_error": ce_err}

    return _timed(2, "analytic dephasing spectrum, decay and coherence", run)


def zero_mode_errors(op: Superoperator, dec=None) -> dict:
    """Zero-mode magnitude and trace-preservation residual, both relative to ``||L||``."""
    dec = dec if dec is not None else decompose(op)
    n = op.system_dim
    norm = dec.norm
    trace_row = vectorize(np.eye(n)).conj() @ op.matrix
    return {
        "zero_mode": float(abs(dec.eigenvalues[0])) / norm,
        "trace_preservation": float(np.max(np.abs(trace_row))) / norm,
    }


def check_zero_mode_and_trace(models=None, states: int = 3) -> CheckResult:
    """Random small models (or the given ones) hold the zero mode and preserve the trace."""
    def run():
        todo = models
        if todo is None:
            todo = [random_model(n, 9000 + 10 * i, nu, hamiltonian=bool(i % 2))
                    for i, (n, nu) in enumerate([(n, nu) for n in (3, 5, 7) for nu in (None, 1.0, 2.0)])]
        zero = trace = traj = 0.0
        for j, model in enumerate(todo):
            op = build_superoperator(model)
            dec = decompose(op)
            errs = zero_mode_errors(op, dec)
            zero, trace = max(zero, errs["zero_mode"]), max(trace, errs["trace_preservation"])
            grid = TimeGrid(np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 60)]))
            for s in range(states):
                rho0 = sample_haar_pure_state(model.system_dim, _seed(9500 + 10 * j + s))
                traj = max(traj, trajectory(dec, rho0, grid).trace_error)
        ok = zero < 1e-8 and trace <= 1e-10 and traj < 1e-8
        return ok, {"zero_mode": zero, "trace_preservation": trace, "trajectory_trace_error": traj}

    return _timed(3, "zero mode and trace preservation", run)


def check_biorthonormality_petermann() -> CheckResult:
    def run():
        gram_err = 0.0
        k_min = math.inf
        rescale_err = 0.0
        rng = np.random.default_rng(VERIFY_SEED)
        for i, nu in enumerate((None, 1.0, 2.0)):
            for n in (3, 5):
                dec = decompose(build_superoperator(random_model(n, 12000 + 100 * i + n, nu)))
                ok = ~dec.flagged
                g = dec.overlaps()[np.ix_(ok, ok)]
                gram_err = max(gram_err, float(np.max(np.abs(g - np.eye(g.shape[0])))))
                km = petermann_factors(dec)
                k_min = min(k_min, float(np.nanmin(km)))
                factors = rng.uniform(0.1, 10, dec.dim) * np.exp(2j * np.pi * rng.uniform(size=dec.dim))
                km2 = petermann_factors(dec.rescaled(factors))
                rescale_err = max(rescale_err, float(np.nanmax(np.abs(km2 - km) / km)))
        # Hermitian limit: a random Hermitian generator and a self-adjoint dephasing Lindbladian
        a = sample_gue_hamiltonian(16, _seed(12999))
        herm_err = float(np.max(np.abs(petermann_factors(decompose(a)) - 1)))
        herm_err = max(herm_err, float(np.max(np.abs(
            petermann_factors(decompose(build_superoperator(dephasing_model()))) - 1))))
        ok = gram_err < 1e-8 and k_min >= 1 - 1e-8 and rescale_err <= 1e-8 and herm_err <= 1e-8
        return ok, {"biorthonormality": gram_err, "min_petermann": k_min,
                    "rescaling_error": rescale_err, "hermitian_limit_error": herm_err}

    return _timed(4, "biorthonormality and Petermann factors", run)


def _match_error(exact: np.ndarray, predicted: np.ndarray) -> float:
    # perturbation is small, so each prediction sits next to its exact eigenvalue
    return float(max(np.min(np.abs(exact - p)) for p in predicted))


def perturbation_error_ratios(base: np.ndarray, direction: np.ndarray, eps0: float, halvings: int = 3) -> list:
    dec = decompose(base)
    errs = []
    for h in range(halvings):
        eps = eps0 / 2**h
        shifts = perturb_eigenvalues(dec, eps * direction).shifts
        exact = np.linalg.eigvals(base + eps * direction)
        errs.append(_match_error(exact, dec.eigenvalues + shifts))
    return [errs[i] / errs[i + 1] for i in range(len(errs) - 1)], errs


def check_perturbation_theory() -> CheckResult:
    def run():
        rng = np.random.default_rng(VERIFY_SEED + 5)
        ratios = []
        # diagonal, well-separated base operator
        lam0 = -np.arange(1.0, 7.0) + 1j * np.array([0.0, 1.5, -1.5, 3.0, -3.0, 0.5])
        d = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        r, _ = perturbation_error_ratios(np.diag(lam0), d / np.linalg.norm(d, 2), 2e-2)
        ratios += r
        # a small Lindbladian perturbed by a Hamiltonian change
        model = random_model(2, 13000, None)
        v = sample_gue_hamiltonian(2, _seed(13010))
        dl = build_delta_superoperator(v).matrix
        r, _ = perturbation_error_ratios(build_superoperator(model).matrix, dl / np.linalg.norm(dl, 2), 2e-2)
        ratios += r
        # first-order bound on every mode of a heavy-tailed instance
        dec = decompose(build_superoperator(random_model(5, 13100, 1.0)))
        dl = build_delta_superoperator(sample_gue_hamiltonian(5, _seed(13110))).matrix
        first = perturb_eigenvalues(dec, dl).first_order
        km = petermann_factors(dec)
        ok_modes = ~dec.flagged
        bound = np.sqrt(km[ok_modes]) * spectral_norm(dl)
        slack = float(np.max(np.abs(first[ok_modes]) / bound))
        ok = all(6.0 <= q <= 10.0 for q in ratios) and slack <= 1 + 1e-10
        return ok, {"halving_ratios": [round(q, 3) for q in ratios], "bound_usage": slack}

    return _timed(5, "second-order eigenvalue shifts and first-order bound", run)


def check_propagation_vs_integration(tol: float = 1e-6) -> CheckResult:
    def run():
        worst = 0.0
        t_eval = np.linspace(0.0, 3.0, 13)
        for i, n in enumerate((2, 3, 4, 5)):
            model = random_model(n, 14000 + 10 * i, (None, 1.0)[i % 2])
            rho0 = sample_haar_pure_state(n, _seed(14500 + i))

            def rhs(_t, y, model=model, n=n):
                return vectorize(apply_rhs_direct(model, devectorize(y)))

            sol = solve_ivp(rhs, (0.0, 3.0), vectorize(rho0).astype(complex), method="DOP853",
                            t_eval=t_eval, rtol=1e-12, atol=1e-13)
            evo = evolve(decompose(build_superoperator(model)), rho0, TimeGrid(t_eval))
            ref = np.stack([devectorize(sol.y[:, k]) for k in range(t_eval.size)])
            worst = max(worst, float(np.max(np.abs(evo.states - ref))))
        return worst <= tol, {"max_abs_error": worst, "tol": tol}

    return _timed(6, "spectral propagation agrees with direct integration", run)


def check_sampler_statistics(budget: float = 60.0) -> CheckResult:
    def run():
        x4 = sample_student_t_matrix(1000, 4.0, _seed(15000)).real.ravel()
        var_rel = abs(float(np.var(x4)) / (4.0 / (2 * (4.0 - 2))) - 1)
        hill, mixed = {}, {}
        for nu in (1.0, 2.0):
            x = sample_student_t_matrix(317, nu, _seed(15100 + int(nu)))
            hill[nu] = estimate_tail_index(np.abs(x.real).ravel())
            # One big entry of X lands on a whole column of U X, so extremes
            # arrive in clusters the size of U. Many small independent mixes
            # keep the clusters far below the estimator's k.
            blocks = x.ravel()[: (x.size // MIX_DIM**2) * MIX_DIM**2].reshape(-1, MIX_DIM, MIX_DIM)
            us = np.stack([sample_haar_unitary(MIX_DIM, SeedSpec(VERIFY_SEED + int(nu), i)) for i in range(len(blocks))])
            mixed[nu] = estimate_tail_index(np.abs((us @ blocks).real).ravel())
        hill_err = max(abs(hill[nu] - nu) for nu in hill)
        mix_err = max(abs(mixed[nu] - nu) for nu in hill)
        ok = var_rel <= 0.10 and hill_err <= 0.3 and mix_err <= 0.3
        return ok, {"variance_relative_error": var_rel,
                    "hill_nu1": hill[1.0], "hill_nu2": hill[2.0],
                    "mixed_nu1": mixed[1.0], "mixed_nu2": mixed[2.0],
                    "mixing_shift": max(abs(mixed[nu] - hill[nu]) for nu in hill)}

    res = _timed(7, "sampler variance and tail indices", run)
    res.details["budget_s"] = budget
    res.passed = res.passed and res.elapsed < budget
    return res


def check_coherence_fit() -> CheckResult:
    def run():
        t = np.linspace(0.0, 20.0, 400)
        truth = (0.8, 3.7, 0.05)
        c = truth[0] * np.exp(-t / truth[1]) + truth[2]
        fit = fit_coherence_time(t, c)
        got = (fit.amplitude, fit.coherence_time, fit.offset)
        param_err = max(abs(g - w) / abs(w) for g, w in zip(got, truth))
        fine = np.linspace(0.0, 2 * truth[1], 401)
        c0 = 0.3 * np.exp(-fine / truth[1]) + 0.01
        sens = coherence_perturbation_metrics(c0, c0 * math.exp(0.1), fine, truth[1], t2_perturbed=truth[1])
        ce_err = abs(sens.delta_CE - 0.01)
        ok = fit.converged and param_err <= 1e-6 and ce_err <= 1e-12
        return ok, {"parameter_relative_error": param_err, "delta_CE_error": ce_err, "converged": fit.converged}

    return _timed(8, "coherence-time fit and log-ratio average", run)


CHECKS = (
    check_superoperator_equivalence,
    check_analytic_dephasing,
    check_zero_mode_and_trace,
    check_biorthonormality_petermann,
    check_perturbation_theory,
    check_propagation_vs_integration,
    check_sampler_statistics,
    check_coherence_fit,
)


def run_all(progress=None) -> list[CheckResult]:
    out = []
    for check in CHECKS:
        res = check()
        out.append(res)
        if progress:
            progress(res)
    return out
