import numpy as np
import pytest

from piperom.fields import FluidProperties, PipeGeometry
from piperom.solver import InletProfile, SolverConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def hydrogen():
    return FluidProperties(density=0.0838, dynamic_viscosity=8.9e-6, sound_speed=1305.0)


@pytest.fixture
def pipe():
    return PipeGeometry(diameter=0.0762, length=5.0)


@pytest.fixture
def small_solver_config(hydrogen, pipe):
    """Desk-scale config for unit tests: coarse grid, short run."""
    return SolverConfig(
        geometry=pipe, fluid=hydrogen, n_cells=64,
        dt_snap=0.002, n_snapshots=40, cfl=0.9,
    )


@pytest.fixture
def default_inlet():
    return InletProfile(base=21.7, amplitude=6.51, period=0.5, shape="sinusoid")
