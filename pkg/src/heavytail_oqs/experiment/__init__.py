"""Sweeps, figure-data emitters, and the command-line interface."""

from .config import GINUE, SCALES, Ensemble, SweepConfig, seed_for, stream_index
from .sweep import RunManifest, load_manifest, run_realization, run_sweep

__all__ = [
    "GINUE",
    "SCALES",
    "Ensemble",
    "SweepConfig",
    "seed_for",
    "stream_index",
    "RunManifest",
    "load_manifest",
    "run_realization",
    "run_sweep",
]
