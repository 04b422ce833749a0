"""Plot-ready CSV emitters for every figure of the study.

Each emitter reads a finished run (manifest plus per-realization files) and
writes CSV files under ``<run>/figures/<figure_id>/``; nothing is plotted.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from ..errors import InvalidParameterError, UnmetDependencyError
from ..rng_ensembles import gaussian_pdf, student_t_pdf
from ..spectral_analysis import empirical_ccdf, pdf_histogram, read_eigenvalue_csv
from .config import GINUE, Ensemble
from .sweep import RunManifest, load_manifest, realization_dir, sample_interaction_matrix

FIGURES = ("fig1", "fig2", "fig3", "fig4", "s1", "s2", "s3", "s4", "s5", "s6", "s7")
# figure id -> (required hamiltonian mode or None, needs dynamics)
REQUIREMENTS = {
    "fig1": (None, False),
    "fig2": ("zero", False),
    "s1": ("zero", False),
    "s2": ("gue", False),
    "s3": ("gue", False),
    "fig3": ("zero", False),
    "s5": ("gue", False),
    "s6": ("gue", False),
    "s4": (None, False),
    "fig4": (None, True),
    "s7": (None, True),
}
FIG1_SAMPLE_BUDGET = 1_000_000
CCDF_GRID = -np.geomspace(1e-4, 1e3, 141)[::-1]


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def quartiles(values) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if not v.size:
        return (math.nan, math.nan, math.nan)
    q1, q2, q3 = np.percentile(v, [25, 50, 75])
    return float(q1), float(q2), float(q3)


def check_requirements(manifest: RunManifest, figure_id: str) -> None:
    if figure_id not in REQUIREMENTS:
        raise InvalidParameterError(f"unknown figure {figure_id!r}; choose from {FIGURES}")
    mode, needs_dynamics = REQUIREMENTS[figure_id]
    cfg = manifest.config
    if mode is not None and cfg["hamiltonian_mode"] != mode:
        raise UnmetDependencyError(
            f"{figure_id} needs a sweep with hamiltonian_mode={mode!r}; this run used {cfg['hamiltonian_mode']!r}"
        )
    if needs_dynamics and not cfg.get("dynamics"):
        raise UnmetDependencyError(f"{figure_id} needs a sweep run in dynamics mode (--dynamics)")
    if not manifest.records():
        raise UnmetDependencyError(f"{figure_id}: the run has no successful realizations")


def ensemble_eigs(manifest: RunManifest, label: str) -> dict:
    """Eigenvalue-dump columns concatenated over all usable realizations of one ensemble."""
    parts = [read_eigenvalue_csv(Path(manifest.run_dir) / label / f"r{rec['realization']:03d}" / "eigs.csv")
             for rec in manifest.records(label)]
    if not parts:
        return {}
    out = {k: np.concatenate([np.asarray(p[k]) for p in parts]) for k in parts[0]}
    out["realization_count"] = len(parts)
    return out


def ginue_q_bound(manifest: RunManifest) -> float:
    """Largest Q over the GinUE reference ensemble (NaN when absent)."""
    if not manifest.records(GINUE):
        return math.nan
    q = ensemble_eigs(manifest, GINUE)["q_factor"]
    q = q[np.isfinite(q)]
    return float(q.max()) if q.size else math.nan


def _labels(manifest: RunManifest) -> list[str]:
    return [Ensemble.parse(v).label for v in manifest.config["nu_list"]]


def _fig1(manifest: RunManifest, out: Path) -> list[Path]:
    cfg = manifest.sweep_config
    edges = np.linspace(-6.0, 6.0, 121)
    centers = 0.5 * (edges[1:] + edges[:-1])
    rows = []
    for e in cfg.ensembles:
        pooled, total = [], 0
        for r in range(cfg.realizations):
            x = sample_interaction_matrix(cfg, e, r).real.ravel()
            pooled.append(x)
            total += x.size
            if total >= FIG1_SAMPLE_BUDGET:
                break
        x = np.concatenate(pooled)
        counts, _ = np.histogram(x, bins=edges)
        density = counts / (x.size * np.diff(edges))
        theory = gaussian_pdf(centers) if e.nu is None else student_t_pdf(centers, e.nu)
        rows += [(e.label, "" if e.nu is None else e.nu, c, d, t, x.size) for c, d, t in zip(centers, density, theory)]
    return [_write_csv(out / "pdf_re_x.csv", ("ensemble", "nu", "x", "density", "theory", "samples"), rows)]


def _spectra(manifest: RunManifest, out: Path) -> list[Path]:
    files = []
    bound = ginue_q_bound(manifest)
    bound_rows = []
    for label in _labels(manifest):
        eigs = ensemble_eigs(manifest, label)
        if not eigs:
            continue
        rows = zip(eigs["realization_id"], eigs["re_lambda"], eigs["im_lambda"], eigs["petermann"], eigs["flagged"].astype(int))
        files.append(_write_csv(out / f"eigenvalues_{label}.csv", ("realization_id", "re_lambda", "im_lambda", "petermann", "flagged"), rows))
        q = eigs["q_factor"]
        qmax = float(np.nanmax(q)) if np.any(np.isfinite(q)) else math.nan
        bound_rows.append((label, qmax, 2.0 * qmax, int(np.sum(q > bound)) if math.isfinite(bound) else ""))
    files.append(
        _write_csv(out / "q_bound.csv", ("ensemble", "max_q", "slope_im_over_abs_re", "modes_above_ginue_bound"),
                   [(GINUE + "_reference", bound, 2.0 * bound, "")] + bound_rows)
    )
    return files


def _relaxation(manifest: RunManifest, out: Path) -> list[Path]:
    gap_rows, k_rows, ccdf_rows, hist_rows, quart_rows = [], [], [], [], []
    for label in _labels(manifest):
        recs = manifest.records(label)
        if not recs:
            continue
        summaries = [manifest.summary(r) for r in recs]
        gaps = [s["gap"] for s in summaries]
        kms = [s["mean_petermann"] for s in summaries]
        gap_rows += [(label, s["realization_id"], s["gap"]) for s in summaries]
        k_rows += [(label, s["realization_id"], s["mean_petermann"]) for s in summaries]
        quart_rows.append((label, "gap", *quartiles(gaps)))
        quart_rows.append((label, "mean_petermann", *quartiles(kms)))
        eigs = ensemble_eigs(manifest, label)
        ccdf = empirical_ccdf(eigs["re_lambda"], CCDF_GRID)
        ccdf_rows += [(label, g, c) for g, c in zip(CCDF_GRID, ccdf)]
        hist = pdf_histogram(eigs["nn_spacing"], bins=60, log=True, range=(1e-10, 1e2))
        hist_rows += [(label, lo, hi, d, hist.excluded) for lo, hi, d in zip(hist.edges[:-1], hist.edges[1:], hist.density)]
    return [
        _write_csv(out / "gaps.csv", ("ensemble", "realization_id", "gap"), gap_rows),
        _write_csv(out / "mean_petermann.csv", ("ensemble", "realization_id", "mean_petermann"), k_rows),
        _write_csv(out / "quartiles.csv", ("ensemble", "metric", "q1", "median", "q3"), quart_rows),
        _write_csv(out / "ccdf_re_lambda.csv", ("ensemble", "re_lambda", "ccdf"), ccdf_rows),
        _write_csv(out / "nn_spacing_pdf.csv", ("ensemble", "bin_lo", "bin_hi", "density", "excluded_nonpositive"), hist_rows),
    ]


def _q_stats(manifest: RunManifest, out: Path) -> list[Path]:
    per_rows, quart_rows, pdf_rows, ccdf_rows = [], [], [], []
    for label in _labels(manifest):
        summaries = [manifest.summary(r) for r in manifest.records(label)]
        if not summaries:
            continue
        for key in ("mean", "top10_mean", "top1_mean"):
            vals = [s["q"][key] for s in summaries]
            per_rows += [(label, s["realization_id"], key, s["q"][key]) for s in summaries]
            quart_rows.append((label, key, *quartiles([v for v in vals if v is not None])))
        re = ensemble_eigs(manifest, label)["re_lambda"]
        hist = pdf_histogram(-re, bins=80, log=True, range=(1e-6, 1e4))
        pdf_rows += [(label, -hi, -lo, d, hist.excluded) for lo, hi, d in zip(hist.edges[:-1], hist.edges[1:], hist.density)]
        ccdf_rows += [(label, g, c) for g, c in zip(CCDF_GRID, empirical_ccdf(re, CCDF_GRID))]
    return [
        _write_csv(out / "q_per_realization.csv", ("ensemble", "realization_id", "statistic", "q"), per_rows),
        _write_csv(out / "q_quartiles.csv", ("ensemble", "statistic", "q1", "median", "q3"), quart_rows),
        _write_csv(out / "re_lambda_pdf.csv", ("ensemble", "re_lo", "re_hi", "density_of_minus_re", "excluded_nonnegative"), pdf_rows),
        _write_csv(out / "re_lambda_ccdf.csv", ("ensemble", "re_lambda", "ccdf"), ccdf_rows),
    ]


def _read_traj(path: Path):
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    c = np.array([float(r["coherence"]) for r in rows])
    s = np.array([float(r["entropy"]) for r in rows])
    return t, c, s


def _coherence(manifest: RunManifest, out: Path) -> list[Path]:
    cfg = manifest.sweep_config
    per_rows, quart_rows, traj_rows, mean_rows = [], [], [], []
    log_grid = np.concatenate([[0.0], np.geomspace(1e-3, 1e4, 141)])
    for e in cfg.ensembles:
        recs = manifest.records(e.label)
        if not recs:
            continue
        vals = {"T2": [], "delta_T2": [], "delta_T2_relative": [], "delta_CE": []}
        curves_c, curves_s = [], []
        for rec in recs:
            s = manifest.summary(rec)
            rdir = realization_dir(manifest.run_dir, e, rec["realization"])
            real_c, real_s = [], []
            for st in s["states"]:
                per_rows.append((e.label, s["realization_id"], st["init_state_id"], st["T2"], st["delta_T2"],
                                 st["delta_T2_relative"], st["delta_CE"], int(bool(st["converged"]))))
                for key in vals:
                    if st["converged"] and st[key] is not None:
                        vals[key].append(st[key])
                t, c, ent = _read_traj(rdir / f"traj_{st['init_state_id']}.csv")
                traj_rows += [(s["realization_id"], st["init_state_id"], ti, ci, si) for ti, ci, si in zip(t, c, ent)]
                # hold the last value past each state's own grid end
                real_c.append(np.interp(log_grid, t, c))
                real_s.append(np.interp(log_grid, t, ent))
            curves_c.append(np.mean(real_c, axis=0))
            curves_s.append(np.mean(real_s, axis=0))
        for key, v in vals.items():
            quart_rows.append((e.label, key, *quartiles(v), len(v)))
        mc, ms = np.mean(curves_c, axis=0), np.mean(curves_s, axis=0)
        mean_rows += [(e.label, t, c, s) for t, c, s in zip(log_grid, mc, ms)]
    return [
        _write_csv(out / "coherence_metrics.csv",
                   ("ensemble", "realization_id", "init_state_id", "T2", "delta_T2", "delta_T2_relative", "delta_CE", "converged"), per_rows),
        _write_csv(out / "coherence_quartiles.csv", ("ensemble", "metric", "q1", "median", "q3", "count"), quart_rows),
        _write_csv(out / "trajectories.csv", ("realization_id", "init_state_id", "t", "coherence", "entropy"), traj_rows),
        _write_csv(out / "ensemble_mean_dynamics.csv", ("ensemble", "t", "mean_coherence", "mean_entropy"), mean_rows),
        _write_csv(out / "accessible_range.csv", ("quantity", "min", "max"),
                   [("coherence", 0.0, math.log(cfg.system_dim)), ("entropy", 0.0, math.log(cfg.system_dim))]),
    ]


EMITTERS = {
    "fig1": _fig1,
    "fig2": _spectra,
    "s1": _spectra,
    "s2": _spectra,
    "s3": _spectra,
    "fig3": _relaxation,
    "s5": _relaxation,
    "s6": _relaxation,
    "s4": _q_stats,
    "fig4": _coherence,
    "s7": _coherence,
}


def emit_figure_data(manifest, figure_id: str, out_dir=None) -> list[Path]:
    """Write the CSV set for ``figure_id`` and return the paths written.

    ``manifest`` may be a :class:`RunManifest` or a run directory.
    """
    if not isinstance(manifest, RunManifest):
        manifest = load_manifest(manifest)
    check_requirements(manifest, figure_id)
    out = Path(out_dir) if out_dir else Path(manifest.run_dir) / "figures" / figure_id
    return EMITTERS[figure_id](manifest, out)
