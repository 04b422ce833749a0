import json
import time

import pytest

from heavytail_oqs.experiment import SweepConfig, load_manifest, run_sweep
from heavytail_oqs.experiment.cli import main

ACCEPTANCE_LINES = []


def record_line(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture(scope="session")
def desk_zero_run(tmp_path_factory):
    """`sweep --scale desk`: every default ensemble, H = 0, no dynamics."""
    out = tmp_path_factory.mktemp("desk_zero")
    t0 = time.perf_counter()
    code = main(["sweep", "--scale", "desk", "--output", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    return load_manifest(out), elapsed


@pytest.fixture(scope="session")
def desk_dynamics_run(tmp_path_factory):
    """GUE Hamiltonian with perturbation dynamics at desk scale."""
    out = tmp_path_factory.mktemp("desk_gue")
    cfg = SweepConfig.for_scale("desk", nu_list=[1.0, "ginue"], hamiltonian_mode="gue",
                                dynamics=True, output_dir=str(out))
    t0 = time.perf_counter()
    manifest = run_sweep(cfg)
    return manifest, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def dump(obj) -> str:
    return json.dumps(obj, default=float)
