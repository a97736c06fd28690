"""One-dimensional isothermal compressible pipe-flow solver with wall friction.

Generates desk-scale snapshot datasets of pressure and velocity along a pipe
driven by a periodic inlet velocity.  The model is the isothermal Euler
system

    d(rho)/dt  + d(rho u)/dx           = 0
    d(rho u)/dt + d(rho u^2 + p)/dx    = -(f / 2D) rho u |u|
    p = a^2 rho

discretized with first-order Rusanov (local Lax-Friedrichs) fluxes and
explicit Euler substeps at the acoustic CFL limit, sampled on a coarser
snapshot grid.  The Darcy friction factor f stands in for the no-slip wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DivergenceError, DomainError, StabilityError
from .fields import (
    FluidProperties,
    PipeGeometry,
    SnapshotMatrix,
    assemble_snapshots,
)

# Hydrogen near 20 C, 1 atm.  The sound speed is the adiabatic value; the
# isothermal pressure law uses it as a constant closure coefficient.
HYDROGEN = FluidProperties(density=0.0838, dynamic_viscosity=8.9e-6, sound_speed=1305.0)

# 3 inch inner diameter, 5 m test section.
DEFAULT_PIPE = PipeGeometry(diameter=0.0762, length=5.0)

# Mean inlet speed backed out of a target pipe Reynolds number of ~1.56e4
# with the hydrogen properties above; amplitude and period are assumptions.
DEFAULT_INLET_SPEED = 21.7

SOLVER_FIELDS = ("p", "Uz", "k", "omega", "nut")
_PROXY_FIELDS = frozenset({"k", "omega", "nut"})


@dataclass(frozen=True)
class InletProfile:
    """Periodic inlet velocity: ``base + amplitude`` modulation with period T.

    ``sinusoid`` is base + A sin(2 pi t / T).  ``trapezoid`` ramps linearly
    between plateaus at base +/- A (rise over T/8, plateau over T/4); both
    shapes have mean ``base`` over one period and never reverse because
    base > amplitude is enforced.
    """

    base: float
    amplitude: float = 0.0
    period: float = 1.0
    shape: str = "sinusoid"

    def __post_init__(self):
        if self.period <= 0:
            raise DomainError("inlet period must be positive")
        if self.amplitude < 0:
            raise DomainError("inlet amplitude must be non-negative")
        if not self.base > self.amplitude:
            raise DomainError("inlet base velocity must exceed the amplitude")
        if self.shape not in ("sinusoid", "trapezoid"):
            raise DomainError(f"unknown inlet shape {self.shape!r}")


def inlet_velocity(profile: InletProfile, t) -> float | np.ndarray:
    """Inlet velocity at time t (scalar or array), T-periodic."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    if profile.shape == "sinusoid":
        out = profile.base + profile.amplitude * np.sin(2.0 * math.pi * t / profile.period)
    else:
        s = np.mod(t / profile.period, 1.0)
        # rise [0,1/8) -> high [1/8,3/8) -> fall [3/8,5/8) -> low [5/8,7/8) -> rise
        unit = np.where(
            s < 0.125, 8.0 * s,
            np.where(
                s < 0.375, 1.0,
                np.where(
                    s < 0.625, 1.0 - 8.0 * (s - 0.375),
                    np.where(s < 0.875, -1.0, -1.0 + 8.0 * (s - 0.875)),
                ),
            ),
        )
        out = profile.base + profile.amplitude * unit
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SolverConfig:
    """Complete description of one solver run."""

    geometry: PipeGeometry = DEFAULT_PIPE
    fluid: FluidProperties = HYDROGEN
    n_cells: int = 256
    friction: float = 0.02
    friction_model: str = "constant"   # or "blasius"
    outlet_pressure: float = 101325.0
    dt_snap: float = 0.002
    n_snapshots: int = 1000
    cfl: float = 0.9
    boundary: str = "inlet_outlet"     # or "closed" (mirrored walls)
    seed: int = 0

    def __post_init__(self):
        if self.n_cells < 8:
            raise DomainError("need at least 8 cells")
        if self.friction < 0:
            raise DomainError("friction factor must be non-negative")
        if self.friction_model not in ("constant", "blasius"):
            raise DomainError(f"unknown friction model {self.friction_model!r}")
        if self.outlet_pressure <= 0:
            raise DomainError("outlet pressure must be positive")
        if self.dt_snap <= 0:
            raise DomainError("snapshot interval must be positive")
        if self.n_snapshots < 2:
            raise DomainError("need at least 2 snapshots")
        if not 0 < self.cfl <= 1:
            raise DomainError("CFL number must be in (0, 1]")
        if self.boundary not in ("inlet_outlet", "closed"):
            raise DomainError(f"unknown boundary mode {self.boundary!r}")

    @property
    def dx(self) -> float:
        return self.geometry.length / self.n_cells


@dataclass(frozen=True)
class SolverState:
    """Cell-centered densities and velocities at one instant."""

    rho: np.ndarray
    u: np.ndarray
    t: float
    dx: float

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)
        if rho.ndim != 1 or u.shape != rho.shape:
            raise DimensionError("rho and u must be 1-D arrays of equal length")
        if rho.size < 8:
            raise DimensionError("need at least 8 cells")
        if not np.all(rho > 0):
            raise DomainError("cell densities must be strictly positive")
        if self.dx <= 0:
            raise DomainError("cell width must be positive")

    @property
    def n_cells(self) -> int:
        return self.rho.size


def uniform_state(config: SolverConfig, inlet: InletProfile) -> SolverState:
    """Steady uniform start: density matching the outlet pressure, inlet base speed."""
    a = config.fluid.sound_speed
    rho0 = config.outlet_pressure / (a * a)
    n = config.n_cells
    return SolverState(np.full(n, rho0), np.full(n, inlet.base), 0.0, config.dx)


def stable_dt(state: SolverState, fluid: FluidProperties, cfl: float) -> float:
    """Largest stable explicit step: cfl * dx / max(|u| + a)."""
    smax = float(np.max(np.abs(state.u)) + fluid.sound_speed)
    return cfl * state.dx / smax


def _friction_factor(config: SolverConfig, rho: np.ndarray, u: np.ndarray) -> np.ndarray | float:
    if config.friction_model == "constant":
        return config.friction
    speed = np.abs(u)
    re = config.fluid.density * speed * config.geometry.diameter / config.fluid.dynamic_viscosity
    # Blasius correlation; the source term vanishes with u so f(0) is moot.
    positive = re > 0
    return np.where(positive, 0.316 * np.where(positive, re, 1.0) ** -0.25, 0.0)


def step(state: SolverState, config: SolverConfig, inlet: InletProfile, dt: float) -> SolverState:
    """Advance the state by one explicit step of size dt.

    Ghost cells: in ``inlet_outlet`` mode the inlet prescribes the velocity
    from the inlet profile at the current time and extrapolates density; the
    outlet pins density to the reference pressure and extrapolates velocity.
    ``closed`` mode mirrors both walls (zero mass flux).

    Raises
    ------
    StabilityError
        If dt exceeds the CFL-stable step.
    DivergenceError
        If the updated state is non-finite or non-positive, naming the
        first bad cell.
    """
    if dt > stable_dt(state, config.fluid, config.cfl) * (1.0 + 1e-9):
        raise StabilityError(
            f"dt={dt:.3e} exceeds stable limit "
            f"{stable_dt(state, config.fluid, config.cfl):.3e}"
        )
    a = config.fluid.sound_speed
    rho, u = state.rho, state.u
    n = rho.size

    if config.boundary == "closed":
        rho_l, u_l = rho[0], -u[0]
        rho_r, u_r = rho[-1], -u[-1]
    else:
        rho_l, u_l = rho[0], inlet_velocity(inlet, state.t)
        rho_r, u_r = config.outlet_pressure / (a * a), u[-1]

    re_ = np.concatenate(([rho_l], rho, [rho_r]))
    ue = np.concatenate(([u_l], u, [u_r]))
    mome = re_ * ue

    flux_rho = mome
    flux_mom = mome * ue + (a * a) * re_
    speed = np.abs(ue) + a

    smax = np.maximum(speed[:-1], speed[1:])
    f_rho = 0.5 * (flux_rho[:-1] + flux_rho[1:]) - 0.5 * smax * (re_[1:] - re_[:-1])
    f_mom = 0.5 * (flux_mom[:-1] + flux_mom[1:]) - 0.5 * smax * (mome[1:] - mome[:-1])

    lam = dt / state.dx
    rho_new = rho - lam * (f_rho[1:] - f_rho[:-1])
    mom_new = rho * u - lam * (f_mom[1:] - f_mom[:-1])

    fric = _friction_factor(config, rho, u)
    mom_new = mom_new - dt * (fric / (2.0 * config.geometry.diameter)) * rho * u * np.abs(u)

    bad = ~(np.isfinite(rho_new) & np.isfinite(mom_new) & (rho_new > 0))
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise DivergenceError(
            f"solver diverged at t={state.t:.6f}s, cell {idx}: "
            f"rho={rho_new[idx]!r}, momentum={mom_new[idx]!r}",
            index=idx,
        )
    return SolverState(rho_new, mom_new / rho_new, state.t + dt, state.dx)


def advance_to(state: SolverState, config: SolverConfig, inlet: InletProfile,
               t_target: float) -> SolverState:
    """Substep at the stable dt until the state reaches t_target."""
    while state.t < t_target - 1e-12 * max(t_target, 1.0):
        dt = min(stable_dt(state, config.fluid, config.cfl), t_target - state.t)
        state = step(state, config, inlet, dt)
    return state


def turbulence_proxies(
    state: SolverState, fluid: FluidProperties, geometry: PipeGeometry
) -> dict[str, np.ndarray]:
    """Algebraic turbulence estimates per cell: k, omega, nut.

    Standard inlet-intensity correlations driven by the local speed; no
    transport equations are solved.  Cells at rest get zeros.
    """
    speed = np.abs(state.u)
    re = fluid.density * speed * geometry.diameter / fluid.dynamic_viscosity
    positive = re > 0
    intensity = np.where(positive, 0.16 * np.where(positive, re, 1.0) ** -0.125, 0.0)
    k = 1.5 * (intensity * speed) ** 2
    ell = 0.07 * geometry.diameter
    omega = np.sqrt(k) / (0.09 ** 0.25 * ell)
    omega_pos = omega > 0
    nut = np.where(omega_pos, k / np.where(omega_pos, omega, 1.0), 0.0)
    return {"k": k, "omega": omega, "nut": nut}


def generate_dataset(
    config: SolverConfig,
    inlet: InletProfile,
    fields: tuple[str, ...] = ("p", "Uz"),
    scaling: str = "identity",
) -> SnapshotMatrix:
    """Run the solver and sample the selected fields every dt_snap seconds.

    Starts from the uniform steady guess and emits exactly ``n_snapshots``
    columns at times dt_snap, 2*dt_snap, ...  Available fields: pressure
    ``p`` (= a^2 rho), axial velocity ``Uz``, and the turbulence proxies
    ``k``, ``omega``, ``nut`` (flagged synthetic in the layout).  The run is
    deterministic for a given config.
    """
    unknown = [f for f in fields if f not in SOLVER_FIELDS]
    if unknown:
        raise DomainError(f"unknown fields {unknown}; available: {SOLVER_FIELDS}")
    if not fields:
        raise DimensionError("no fields selected")

    a = config.fluid.sound_speed
    state = uniform_state(config, inlet)
    n = config.n_cells
    raw = {name: np.empty((n, config.n_snapshots)) for name in fields}
    want_proxies = any(name in _PROXY_FIELDS for name in fields)

    for j in range(config.n_snapshots):
        state = advance_to(state, config, inlet, (j + 1) * config.dt_snap)
        if want_proxies:
            proxies = turbulence_proxies(state, config.fluid, config.geometry)
        for name in fields:
            if name == "p":
                raw[name][:, j] = (a * a) * state.rho
            elif name == "Uz":
                raw[name][:, j] = state.u
            else:
                raw[name][:, j] = proxies[name]

    times = config.dt_snap * (np.arange(config.n_snapshots) + 1.0)
    return assemble_snapshots(raw, times, scaling=scaling, synthetic=_PROXY_FIELDS)
