"""Sweep configuration, named scales, and seed derivation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import InvalidParameterError
from ..rng_ensembles import SeedSpec

GINUE = "ginue"
HAMILTONIAN_MODES = ("zero", "gue")
HAMILTONIAN_SCALES = ("formula", "stated-trace")
DEFAULT_SEED = 12345

SCALES = {
    "desk": {"system_dim": 20, "realizations": 16, "initial_states": 5},
    "paper": {"system_dim": 50, "realizations": 64, "initial_states": 20},
}


@dataclass(frozen=True)
class Ensemble:
    """One ensemble of the sweep: a Student's-t ``nu`` or the GinUE reference."""

    nu: float | None

    @classmethod
    def parse(cls, value) -> "Ensemble":
        if isinstance(value, Ensemble):
            return value
        if isinstance(value, str) and value.strip().lower() == GINUE:
            return cls(None)
        nu = float(value)
        if not nu > 0:
            raise InvalidParameterError(f"every nu must be positive, got {value!r}")
        return cls(nu)

    @property
    def label(self) -> str:
        if self.nu is None:
            return GINUE
        return f"nu{self.nu:g}"

    def to_json(self):
        return GINUE if self.nu is None else self.nu


@dataclass
class SweepConfig:
    system_dim: int = 50
    nu_list: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0, GINUE])
    realizations: int = 64
    initial_states: int = 20
    hamiltonian_mode: str = "zero"
    alpha: float = 1.0
    hbar: float = 1.0
    master_seed: int = DEFAULT_SEED
    output_dir: str = "runs/sweep"
    worker_count: int = 1
    dynamics: bool = False
    time_points: int = 400
    sensitivity_points: int = 401
    perturbation_scale: float = 0.1
    hamiltonian_scale: str = "formula"
    blas_threads: int | None = 1
    dump_superoperator: bool = False

    def __post_init__(self):
        # canonical form, so equal sweeps compare and serialize equal
        self.nu_list = [e.to_json() for e in self.ensembles]
        self.validate()

    def validate(self) -> None:
        if int(self.system_dim) != self.system_dim or self.system_dim < 2:
            raise InvalidParameterError(f"system_dim must be an integer >= 2, got {self.system_dim}")
        if int(self.realizations) != self.realizations or self.realizations < 1:
            raise InvalidParameterError(f"realizations must be >= 1, got {self.realizations}")
        if self.initial_states < 1:
            raise InvalidParameterError(f"initial_states must be >= 1, got {self.initial_states}")
        if self.hamiltonian_mode not in HAMILTONIAN_MODES:
            raise InvalidParameterError(f"hamiltonian_mode must be one of {HAMILTONIAN_MODES}")
        if self.hamiltonian_scale not in HAMILTONIAN_SCALES:
            raise InvalidParameterError(f"hamiltonian_scale must be one of {HAMILTONIAN_SCALES}")
        if not self.alpha >= 0 or not self.hbar > 0:
            raise InvalidParameterError("alpha must be >= 0 and hbar > 0")
        if self.worker_count < 1:
            raise InvalidParameterError("worker_count must be >= 1")
        if self.time_points < 8 or self.sensitivity_points < 8:
            raise InvalidParameterError("time grids need at least 8 points")
        labels = [e.label for e in self.ensembles]
        if not labels:
            raise InvalidParameterError("nu_list is empty")
        if len(set(labels)) != len(labels):
            raise InvalidParameterError(f"duplicate ensembles in nu_list: {labels}")

    @property
    def ensembles(self) -> list[Ensemble]:
        return [Ensemble.parse(v) for v in self.nu_list]

    @classmethod
    def for_scale(cls, scale: str, **overrides) -> "SweepConfig":
        if scale not in SCALES:
            raise InvalidParameterError(f"unknown scale {scale!r}; choose from {sorted(SCALES)}")
        return cls(**{**SCALES[scale], **overrides})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["nu_list"] = [e.to_json() for e in self.ensembles]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path, **overrides) -> "SweepConfig":
        data = json.loads(Path(path).read_text())
        if "scale" in data:
            base = dict(SCALES[data.pop("scale")])
            data = {**base, **data}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)


def stream_index(ensemble: Ensemble, realization: int, role: str) -> int:
    """Stable 63-bit substream id from ``(ensemble, realization, role)``.

    Hash-based so that adding or removing an ensemble never moves another
    ensemble's streams.
    """
    key = f"{ensemble.label}|{int(realization)}|{role}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little") >> 1


def seed_for(config: SweepConfig, ensemble: Ensemble, realization: int, role: str) -> SeedSpec:
    return SeedSpec(int(config.master_seed), stream_index(ensemble, realization, role))
