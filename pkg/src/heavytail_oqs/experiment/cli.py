"""Command-line entry point.

Subcommands: ``sample``, ``spectrum``, ``sweep``, ``figures``, ``verify``.
Results go to stdout as JSON; failures print a JSON error object to stderr
and exit 1. Usage errors exit 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import HeavyTailError
from ..rng_ensembles import build_kossakowski, classify_tail_regime, estimate_tail_index
from ..spectral_analysis import compute_metrics, decompose, write_eigenvalue_csv
from ..liouvillian import build_superoperator
from .config import DEFAULT_SEED, HAMILTONIAN_MODES, HAMILTONIAN_SCALES, SCALES, Ensemble, SweepConfig
from .figures import FIGURES, emit_figure_data
from .sweep import _clean, build_model, run_sweep, sample_interaction_matrix


def _emit(obj) -> None:
    print(json.dumps(_clean(obj), indent=2))


def _base_config(args, **extra) -> SweepConfig:
    """Defaults, then ``--scale``, then ``--config``, then explicit flags."""
    overrides = {
        "master_seed": args.seed,
        "worker_count": getattr(args, "workers", None),
        "output_dir": getattr(args, "output", None),
        **extra,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    scaled = dict(SCALES[args.scale]) if args.scale else {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if "scale" in data:
            scaled = {**SCALES[data.pop("scale")], **scaled} if not args.scale else scaled
        return SweepConfig.from_dict({**scaled, **data, **overrides})
    return SweepConfig.from_dict({**scaled, **overrides})


def cmd_sample(args) -> int:
    e = Ensemble.parse(args.nu)
    cfg = _base_config(args, system_dim=args.dim, nu_list=[e.to_json()])
    x = sample_interaction_matrix(cfg, e, args.realization)
    parts = np.concatenate([x.real.ravel(), x.imag.ravel()])
    report = {
        "ensemble": e.label,
        "nu": e.nu,
        "tail_regime": classify_tail_regime(e.nu).value if e.nu is not None else "gaussian",
        "matrix_dim": x.shape[0],
        "entries": int(x.size),
        "part_mean": float(parts.mean()),
        "part_median_abs": float(np.median(np.abs(parts))),
        "part_max_abs": float(np.max(np.abs(parts))),
        "kossakowski_trace": float(np.trace(build_kossakowski(x, cfg.system_dim)).real),
    }
    try:
        report["tail_index"] = estimate_tail_index(np.abs(parts))
    except HeavyTailError as exc:
        report["tail_index"] = None
        report["tail_index_error"] = str(exc)
    _emit(report)
    return 0


def cmd_spectrum(args) -> int:
    e = Ensemble.parse(args.nu)
    cfg = _base_config(args, system_dim=args.dim, nu_list=[e.to_json()],
                       hamiltonian_mode=args.hamiltonian, hamiltonian_scale=args.hamiltonian_scale)
    model = build_model(cfg, e, args.realization)
    op = build_superoperator(model)
    dec = decompose(op)
    m = compute_metrics(dec)
    if args.output:
        write_eigenvalue_csv(args.output, f"{e.label}/r{args.realization:03d}", dec, m)
    q = m.q_factors[np.isfinite(m.q_factors)]
    _emit({
        "ensemble": e.label,
        "system_dim": cfg.system_dim,
        "hamiltonian_mode": cfg.hamiltonian_mode,
        "model_fingerprint": op.model_fingerprint,
        "norm": dec.norm,
        "gap": m.gap,
        "lambda_2": [dec.eigenvalues[1].real, dec.eigenvalues[1].imag],
        "mean_petermann": m.mean_petermann,
        "max_q": float(q.max()) if q.size else None,
        "flagged_modes": m.flagged_count,
        "steady_state_distance": m.steady_state_distance,
        "invariants": dec.invariant_errors(op.matrix),
        "eigs_csv": args.output,
    })
    return 0


def cmd_sweep(args) -> int:
    extra = {}
    if args.nu:
        extra["nu_list"] = [Ensemble.parse(v).to_json() for v in args.nu]
    for key in ("realizations", "initial_states", "hamiltonian_scale"):
        if getattr(args, key) is not None:
            extra[key] = getattr(args, key)
    if args.dim is not None:
        extra["system_dim"] = args.dim
    if args.hamiltonian is not None:
        extra["hamiltonian_mode"] = args.hamiltonian
    if args.dynamics:
        extra["dynamics"] = True
    cfg = _base_config(args, **extra)

    def progress(rec, done, total):
        logging.getLogger(__name__).info("%d/%d %s %s", done, total, rec["realization_id"], rec["status"])

    manifest = run_sweep(cfg, progress=progress)
    counts = {}
    for rec in manifest.realizations:
        counts[rec["status"]] = counts.get(rec["status"], 0) + 1
    _emit({"run": str(cfg.output_dir), "status_counts": counts,
           "wall_clock_s": manifest.timing.get("wall_clock_s"), "normalization": manifest.normalization})
    return 0


def cmd_figures(args) -> int:
    paths = emit_figure_data(args.run, args.figure_id, args.output)
    _emit({"figure": args.figure_id, "files": [str(p) for p in paths]})
    return 0


def cmd_verify(args) -> int:
    from ..verify import run_all

    results = run_all(lambda r: print(r.line(), file=sys.stderr, flush=True))
    ok = all(r.passed for r in results)
    _emit({"passed": ok, "checks": [r.to_dict() for r in results]})
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON sweep configuration")
    common.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--scale", choices=sorted(SCALES), help="named problem size")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="heavytail-oqs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="inspect one interaction-matrix draw")
    s.add_argument("--nu", default="1", help="t degrees of freedom or 'ginue'")
    s.add_argument("--dim", type=int, default=20, help="system dimension N")
    s.add_argument("--realization", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("spectrum", parents=[common], help="decompose one realization")
    s.add_argument("--nu", default="1")
    s.add_argument("--dim", type=int, default=20)
    s.add_argument("--realization", type=int, default=0)
    s.add_argument("--hamiltonian", choices=HAMILTONIAN_MODES, default="zero")
    s.add_argument("--hamiltonian-scale", dest="hamiltonian_scale", choices=HAMILTONIAN_SCALES, default="formula")
    s.add_argument("--output", help="write the eigenvalue CSV here")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("sweep", parents=[common], help="run an ensemble sweep")
    s.add_argument("--workers", type=int)
    s.add_argument("--output", help="run directory")
    s.add_argument("--nu", nargs="+", help="ensembles, e.g. 1 2 ginue")
    s.add_argument("--dim", type=int)
    s.add_argument("--realizations", type=int)
    s.add_argument("--initial-states", dest="initial_states", type=int)
    s.add_argument("--hamiltonian", choices=HAMILTONIAN_MODES)
    s.add_argument("--hamiltonian-scale", dest="hamiltonian_scale", choices=HAMILTONIAN_SCALES)
    s.add_argument("--dynamics", action="store_true", help="also propagate initial states")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("figures", parents=[common], help="emit plot-ready CSV for one figure")
    s.add_argument("figure_id", choices=FIGURES)
    s.add_argument("--run", required=True, help="run directory of a finished sweep")
    s.add_argument("--output", help="output directory (default <run>/figures/<id>)")
    s.set_defaults(func=cmd_figures)

    s = sub.add_parser("verify", parents=[common], help="run the fast oracle suite")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (HeavyTailError, OSError, json.JSONDecodeError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        failures = getattr(exc, "failures", None)
        if failures:
            err["failures"] = failures
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
