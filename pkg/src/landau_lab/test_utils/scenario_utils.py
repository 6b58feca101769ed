import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Optional

import pytest
import toml

from landau_lab.core.envs.lab_env_vars import LANDAU_LAB_FULL_TESTS, _EnvironmentVariable
from landau_lab.core.equilibria import Equilibrium, gaussian_equilibrium
from landau_lab.core.kinetic_sim import SimConfig

FULL_RESOLUTION = LANDAU_LAB_FULL_TESTS.get().lower() == "true"


def requires_full_resolution(test_func):
    return pytest.mark.full_resolution(
        pytest.mark.skipif(
            not FULL_RESOLUTION,
            reason="Production-resolution run; set LANDAU_LAB_FULL_TESTS=true to enable",
        )(test_func)
    )


@pytest.fixture(scope="module")
def gaussian_1d() -> Equilibrium:
    return gaussian_equilibrium(1)


def small_sim_config(**overrides: Any) -> SimConfig:
    """A coarse d=1 configuration that runs in well under a second per unit time."""
    values: Dict[str, Any] = {"n_x": 12, "n_v": 128, "v_max": 8.0, "dt": 0.1, "t_max": 2.0}
    values.update(overrides)
    return SimConfig(**values)


def small_run_config(scenario: str, output_dir: Optional[Path] = None, **blocks: Any):
    """A run configuration dict with short horizons for every stage."""
    data: Dict[str, Any] = {
        "scenario": scenario,
        "h1_grid_step": 0.05,
        "penrose": {"k_max": 3, "im_max": 10.0, "step": 0.1},
        "linear": {"dt": 0.02, "t_max": 20.0, "k_max": 1},
        "nonlinear": {
            "n_x": 12,
            "n_v": 128,
            "dt": 0.1,
            "t_max": 2.0,
            "seed": [{"species": "plus", "k": [1]}],
        },
        "snapshot_every": 5,
    }
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    for key, value in blocks.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return data


def write_config(path: Path, data: Dict[str, Any]) -> Path:
    with open(path, "w") as f:
        toml.dump(data, f)
    return path


@contextmanager
def set_env(var: _EnvironmentVariable, value: str):
    previous = os.environ.get(var.name)
    try:
        var.set(value)
        yield
    finally:
        if previous is None:
            var.remove()
        else:
            var.set(previous)
