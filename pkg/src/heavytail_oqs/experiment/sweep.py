"""Sweep orchestration: one task per (ensemble, realization), a single manifest writer."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from contextlib import nullcontext
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..dynamics import (
    TimeGrid,
    coherence_perturbation_metrics,
    choose_time_grid,
    fit_coherence_time,
    make_perturbation,
    trajectory,
)
from ..errors import UnmetDependencyError
from ..liouvillian import LindbladModel, build_superoperator, write_superoperator
from ..operator_basis import su_generators, vectorize
from ..rng_ensembles import (
    build_kossakowski,
    sample_ginibre,
    sample_gue_hamiltonian,
    sample_haar_pure_state,
    sample_student_t_matrix,
)
from ..spectral_analysis import compute_metrics, decompose, write_eigenvalue_csv
from .config import Ensemble, SweepConfig, seed_for, stream_index

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TRAJ_COLUMNS = ("realization_id", "init_state_id", "t", "coherence", "entropy")
TOL_INVARIANT = 1e-8
TOL_TRACE_PRESERVATION = 1e-10


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(path, data) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def realization_dir(run_dir, ensemble: Ensemble, r: int) -> Path:
    return Path(run_dir) / ensemble.label / f"r{r:03d}"


def hamiltonian_amplitude(config: SweepConfig) -> float:
    # "stated-trace" rescales the formula's <Tr H^2> = N down to 1/N
    return 1.0 if config.hamiltonian_scale == "formula" else 1.0 / config.system_dim


def sample_interaction_matrix(config: SweepConfig, ensemble: Ensemble, r: int) -> np.ndarray:
    m = config.system_dim**2 - 1
    seed = seed_for(config, ensemble, r, "kossakowski")
    if ensemble.nu is None:
        return sample_ginibre(m, seed)
    return sample_student_t_matrix(m, ensemble.nu, seed)


def build_model(config: SweepConfig, ensemble: Ensemble, r: int, hamiltonian=None) -> LindbladModel:
    n = config.system_dim
    k = build_kossakowski(sample_interaction_matrix(config, ensemble, r), n)
    if hamiltonian is None:
        if config.hamiltonian_mode == "gue":
            hamiltonian = hamiltonian_amplitude(config) * sample_gue_hamiltonian(n, seed_for(config, ensemble, r, "hamiltonian"))
        else:
            hamiltonian = np.zeros((n, n), dtype=complex)
    return LindbladModel(hamiltonian, k, su_generators(n), config.alpha, config.hbar)


def _q_summary(q: np.ndarray) -> dict:
    q = np.sort(q[np.isfinite(q)])[::-1]
    if not q.size:
        return {"mean": None, "top10_mean": None, "top1_mean": None, "max": None}
    top10 = q[: max(1, int(math.ceil(0.10 * q.size)))]
    top1 = q[: max(1, int(math.ceil(0.01 * q.size)))]
    return {"mean": q.mean(), "top10_mean": top10.mean(), "top1_mean": top1.mean(), "max": q[0]}


def _write_trajectory(path: Path, rid: str, sid: str, rec) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_COLUMNS)
        for t, c, s in zip(rec.grid.points, rec.coherence, rec.entropy):
            w.writerow([rid, sid, repr(float(t)), repr(float(c)), repr(float(s))])


def _run_dynamics(config, ensemble, r, model, dec0, rdir: Path, rid: str) -> tuple[list, dict]:
    n = config.system_dim
    amp = hamiltonian_amplitude(config)
    v = make_perturbation(
        n,
        seed_for(config, ensemble, r, "perturbation"),
        h0_seed=seed_for(config, ensemble, r, "hamiltonian"),
        scale=config.perturbation_scale,
        amplitude=amp,
    )
    model_v = LindbladModel(model.hamiltonian + v, model.kossakowski, model.basis, model.alpha, model.hbar)
    dec_v = decompose(build_superoperator(model_v))
    states = []
    for s in range(config.initial_states):
        sid = f"s{s:02d}"
        rho0 = sample_haar_pure_state(n, seed_for(config, ensemble, r, f"initial_state_{s}"))
        grid = choose_time_grid(dec0, rho0, config.time_points)
        rec0 = trajectory(dec0, rho0, grid)
        recv = trajectory(dec_v, rho0, grid)
        fit0 = fit_coherence_time(grid, rec0.coherence)
        fitv = fit_coherence_time(grid, recv.coherence)
        _write_trajectory(rdir / f"traj_{sid}.csv", rid, sid, rec0)
        _write_trajectory(rdir / f"traj_{sid}_perturbed.csv", rid, sid + "+V", recv)
        sens = None
        if fit0.converged and fit0.coherence_time > 0:
            fine = TimeGrid.uniform(2.0 * fit0.coherence_time, config.sensitivity_points)
            c0 = trajectory(dec0, rho0, fine).coherence
            cv = trajectory(dec_v, rho0, fine).coherence
            sens = coherence_perturbation_metrics(c0, cv, fine, fit0.coherence_time, t2_perturbed=fitv.coherence_time)
        states.append(
            {
                "init_state_id": sid,
                "t_end": grid.points[-1],
                "no_decay": grid.no_decay,
                "T2": fit0.coherence_time,
                "amplitude": fit0.amplitude,
                "offset": fit0.offset,
                "rms_residual": fit0.rms_residual,
                "converged": fit0.converged,
                "T2_perturbed": fitv.coherence_time,
                "converged_perturbed": fitv.converged,
                "delta_T2": sens.delta_T2 if sens else None,
                "delta_T2_relative": sens.delta_T2_relative if sens else None,
                "delta_CE": sens.delta_CE if sens else None,
                "trace_error": max(rec0.trace_error, recv.trace_error),
                "positivity_error": max(rec0.positivity_error, recv.positivity_error),
                "antihermitian_residual": max(rec0.antihermitian_residual, recv.antihermitian_residual),
                "warnings": rec0.warnings + recv.warnings,
            }
        )
    extra = {
        "tr_v2": float(np.trace(v @ v).real),
        "perturbed_flagged_modes": int(dec_v.flagged.sum()),
    }
    return states, extra


def run_realization(config_dict: dict, ensemble_value, r: int, run_dir: str) -> dict:
    """Worker task. Never raises: failures are reported in the returned record."""
    config = SweepConfig.from_dict(config_dict)
    ensemble = Ensemble.parse(ensemble_value)
    rid = f"{ensemble.label}/r{r:03d}"
    roles = ["kossakowski"]
    if config.hamiltonian_mode == "gue":
        roles.append("hamiltonian")
    if config.dynamics:
        roles += ["perturbation"] + [f"initial_state_{s}" for s in range(config.initial_states)]
    record = {
        "ensemble": ensemble.label,
        "realization": r,
        "realization_id": rid,
        "stream_indices": {role: stream_index(ensemble, r, role) for role in roles},
        "status": "failed",
        "files": {},
    }
    limiter = nullcontext()
    if config.blas_threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=config.blas_threads)
    try:
        with limiter:
            rdir = realization_dir(run_dir, ensemble, r)
            rdir.mkdir(parents=True, exist_ok=True)
            model = build_model(config, ensemble, r)
            lop = build_superoperator(model)
            dec = decompose(lop)
            metrics = compute_metrics(dec)
            errs = dec.invariant_errors(lop.matrix)
            errs["trace_preservation"] = float(np.max(np.abs(vectorize(np.eye(config.system_dim)).conj() @ lop.matrix))) / max(dec.norm, 1e-300)
            write_eigenvalue_csv(rdir / "eigs.csv", rid, dec, metrics)
            if config.dump_superoperator:
                write_superoperator(rdir / "superoperator.bin", lop)
            summary = {
                "realization_id": rid,
                "ensemble": ensemble.label,
                "nu": ensemble.nu,
                "model_fingerprint": lop.model_fingerprint,
                "norm": dec.norm,
                "gap": metrics.gap,
                "lambda_2": [dec.eigenvalues[1].real, dec.eigenvalues[1].imag],
                "mean_petermann": metrics.mean_petermann,
                "median_petermann": float(np.nanmedian(metrics.petermann)),
                "flagged_modes": metrics.flagged_count,
                "steady_state_distance": metrics.steady_state_distance,
                "q": _q_summary(metrics.q_factors),
                "invariants": errs,
                "tr_h2": float(np.trace(model.hamiltonian @ model.hamiltonian).real),
            }
            flagged = bool(
                metrics.flagged_count
                or errs["biorthonormality"] > TOL_INVARIANT
                or errs["residual"] > TOL_INVARIANT
                or errs["zero_mode"] > TOL_INVARIANT
                or errs["trace_preservation"] > TOL_TRACE_PRESERVATION
            )
            if config.dynamics:
                states, extra = _run_dynamics(config, ensemble, r, model, dec, rdir, rid)
                summary["states"] = states
                summary.update(extra)
                flagged = flagged or any(
                    (not st["converged"]) or st["trace_error"] > TOL_INVARIANT or st["warnings"] for st in states
                )
            _dump_json(rdir / "summary.json", summary)
            run_root = Path(run_dir)
            record["files"] = {
                str(p.relative_to(run_root)): sha256_file(p) for p in sorted(rdir.iterdir()) if p.is_file()
            }
            record["status"] = "flagged" if flagged else "ok"
    except Exception as exc:  # noqa: BLE001 - one realization must never abort the sweep
        record["error"] = f"{type(exc).__name__}: {exc}"
        record["traceback"] = traceback.format_exc(limit=5)
    return record


@dataclass
class RunManifest:
    config: dict
    realizations: list = field(default_factory=list)
    tool_version: str = __version__
    normalization: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    run_dir: str = ""

    @property
    def sweep_config(self) -> SweepConfig:
        return SweepConfig.from_dict(self.config)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "tool_version": self.tool_version,
            "realizations": self.realizations,
            "normalization": self.normalization,
            "timing": self.timing,
        }

    def deterministic_dict(self) -> dict:
        """Everything except wall-clock information."""
        d = self.to_dict()
        d.pop("timing")
        d["config"] = {k: v for k, v in d["config"].items() if k not in ("output_dir", "worker_count")}
        return d

    def write(self, run_dir=None) -> Path:
        path = Path(run_dir or self.run_dir) / MANIFEST
        _dump_json(path, self.to_dict())
        return path

    def records(self, ensemble: str | None = None, ok_only: bool = True) -> list:
        out = [r for r in self.realizations if ensemble is None or r["ensemble"] == ensemble]
        if ok_only:
            out = [r for r in out if r["status"] != "failed"]
        return out

    def summary(self, record: dict) -> dict:
        return json.loads((Path(self.run_dir) / record["ensemble"] / f"r{record['realization']:03d}" / "summary.json").read_text())

    def verify_files(self) -> list:
        """Paths whose checksum no longer matches (or that are missing)."""
        bad = []
        for rec in self.realizations:
            for rel, digest in rec["files"].items():
                p = Path(self.run_dir) / rel
                if not p.exists() or sha256_file(p) != digest:
                    bad.append(rel)
        return bad


def load_manifest(run_dir) -> RunManifest:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise UnmetDependencyError(f"no {MANIFEST} in {run_dir}; run `sweep` first")
    data = json.loads(path.read_text())
    return RunManifest(
        config=data["config"],
        realizations=data["realizations"],
        tool_version=data.get("tool_version", ""),
        normalization=data.get("normalization", {}),
        timing=data.get("timing", {}),
        run_dir=str(run_dir),
    )


def _normalization(config: SweepConfig, manifest: RunManifest) -> dict:
    out = {"hamiltonian_scale": config.hamiltonian_scale, "hamiltonian_amplitude": hamiltonian_amplitude(config)}
    if config.hamiltonian_mode != "gue":
        return out
    tr_h2, tr_v2 = [], []
    for rec in manifest.records():
        s = manifest.summary(rec)
        tr_h2.append(s["tr_h2"])
        if s.get("tr_v2") is not None:
            tr_v2.append(s["tr_v2"])
    if tr_h2:
        out["mean_tr_h2"] = float(np.mean(tr_h2))
        out["stated_mean_tr_h2"] = 1.0 / config.system_dim
    if tr_v2:
        out["mean_tr_v2"] = float(np.mean(tr_v2))
        out["tr_v2_over_tr_h2"] = float(np.mean(tr_v2) / np.mean(tr_h2))
        out["perturbation_reading"] = f"V = {config.perturbation_scale:g} * GUE sample (amplitude ratio)"
    return out


def run_sweep(config: SweepConfig, progress=None) -> RunManifest:
    """Run every (ensemble, realization) task and write the manifest."""
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(e, r) for e in config.ensembles for r in range(config.realizations)]
    order = {(e.label, r): i for i, (e, r) in enumerate(tasks)}
    manifest = RunManifest(config=config.to_dict(), run_dir=str(run_dir))
    started = time.time()
    t0 = datetime.now(timezone.utc).isoformat()
    cfg = config.to_dict()

    def accept(rec):
        manifest.realizations.append(rec)
        manifest.realizations.sort(key=lambda x: order[(x["ensemble"], x["realization"])])
        manifest.timing = {"started": t0, "wall_clock_s": time.time() - started}
        manifest.write()
        if rec["status"] == "failed":
            log.warning("realization %s failed: %s", rec["realization_id"], rec.get("error"))
        if progress:
            progress(rec, len(manifest.realizations), len(tasks))

    if config.worker_count == 1:
        for e, r in tasks:
            accept(run_realization(cfg, e.to_json(), r, str(run_dir)))
    else:
        with ProcessPoolExecutor(max_workers=config.worker_count) as pool:
            futures = [pool.submit(run_realization, cfg, e.to_json(), r, str(run_dir)) for e, r in tasks]
            for fut in as_completed(futures):
                accept(fut.result())

    manifest.normalization = _normalization(config, manifest)
    manifest.timing = {
        "started": t0,
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_clock_s": time.time() - started,
        "pid": os.getpid(),
    }
    manifest.write()
    return manifest
