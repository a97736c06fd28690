import numpy as np
import pytest
from scipy.integrate import quad

from piperom.errors import DivergenceError, DomainError, StabilityError
from piperom.fields import FluidProperties, PipeGeometry
from piperom.solver import (
    InletProfile,
    SolverConfig,
    SolverState,
    generate_dataset,
    inlet_velocity,
    stable_dt,
    step,
    turbulence_proxies,
    uniform_state,
)


def closed_config(hydrogen, pipe, n_cells=64, friction=0.0, cfl=0.9):
    return SolverConfig(
        geometry=pipe, fluid=hydrogen, n_cells=n_cells, friction=friction,
        boundary="closed", cfl=cfl,
    )


def gaussian_pulse_state(config, amplitude=1e-4, width=0.4, center=None):
    a = config.fluid.sound_speed
    rho0 = config.outlet_pressure / (a * a)
    x = (np.arange(config.n_cells) + 0.5) * config.dx
    center = config.geometry.length / 2 if center is None else center
    rho = rho0 * (1.0 + amplitude * np.exp(-((x - center) / width) ** 2))
    return SolverState(rho, np.zeros(config.n_cells), 0.0, config.dx)


def run_to(state, config, inlet, t_end):
    while state.t < t_end - 1e-15:
        dt = min(stable_dt(state, config.fluid, config.cfl), t_end - state.t)
        state = step(state, config, inlet, dt)
    return state


class TestInletVelocity:
    def test_sinusoid_at_zero(self):
        prof = InletProfile(base=21.7, amplitude=6.51, period=0.5)
        assert inlet_velocity(prof, 0.0) == pytest.approx(21.7)

    @pytest.mark.parametrize("shape", ["sinusoid", "trapezoid"])
    def test_periodicity(self, shape):
        prof = InletProfile(base=10.0, amplitude=3.0, period=0.7, shape=shape)
        for t in (0.0, 0.1, 0.33, 0.51, 0.69):
            assert inlet_velocity(prof, t + 0.7) == pytest.approx(
                inlet_velocity(prof, t), abs=1e-12
            )

    @pytest.mark.parametrize("shape", ["sinusoid", "trapezoid"])
    def test_mean_over_period_is_base(self, shape):
        # independent quadrature oracle
        prof = InletProfile(base=8.0, amplitude=2.5, period=0.4, shape=shape)
        mean, err = quad(lambda t: inlet_velocity(prof, t), 0.0, prof.period,
                         limit=200)
        assert err < 1e-10
        assert mean / prof.period == pytest.approx(8.0, abs=1e-9)

    def test_never_reverses(self):
        with pytest.raises(DomainError):
            InletProfile(base=1.0, amplitude=1.5, period=1.0)

    def test_trapezoid_plateaus(self):
        prof = InletProfile(base=10.0, amplitude=2.0, period=1.0, shape="trapezoid")
        assert inlet_velocity(prof, 0.25) == pytest.approx(12.0)
        assert inlet_velocity(prof, 0.75) == pytest.approx(8.0)


class TestStableDt:
    def test_formula_unit_case(self):
        state = SolverState(np.ones(8), np.zeros(8), 0.0, 1.0)
        fluid = FluidProperties(1.0, 1.0, 1.0)
        assert stable_dt(state, fluid, 1.0) == pytest.approx(1.0)

    def test_doubling_sound_speed_halves(self):
        state = SolverState(np.ones(8), np.zeros(8), 0.0, 1.0)
        d1 = stable_dt(state, FluidProperties(1.0, 1.0, 1.0), 1.0)
        d2 = stable_dt(state, FluidProperties(1.0, 1.0, 2.0), 1.0)
        assert d2 == pytest.approx(d1 / 2)

    def test_default_config_forces_substepping(self, hydrogen, pipe, default_inlet):
        config = SolverConfig(geometry=pipe, fluid=hydrogen, n_cells=256)
        state = uniform_state(config, default_inlet)
        dt = stable_dt(state, hydrogen, config.cfl)
        assert dt < 0.002 / 50  # far below the snapshot interval


class TestStep:
    def test_uniform_closed_state_is_fixed_point(self, hydrogen, pipe):
        config = closed_config(hydrogen, pipe)
        rho0 = config.outlet_pressure / hydrogen.sound_speed**2
        state = SolverState(np.full(64, rho0), np.zeros(64), 0.0, config.dx)
        out = step(state, config, InletProfile(base=1.0), stable_dt(state, hydrogen, 0.9))
        np.testing.assert_allclose(out.rho, state.rho, rtol=1e-14, atol=0)
        np.testing.assert_allclose(out.u, 0.0, atol=1e-14)

    def test_mass_conserved_per_step(self, hydrogen, pipe, rng):
        config = closed_config(hydrogen, pipe)
        rho = 0.06 * (1.0 + 0.3 * rng.random(64))
        u = 5.0 * rng.standard_normal(64)
        state = SolverState(rho, u, 0.0, config.dx)
        mass0 = state.rho.sum() * state.dx
        for _ in range(50):
            state = step(state, config, InletProfile(base=1.0),
                         stable_dt(state, hydrogen, 0.9))
            mass = state.rho.sum() * state.dx
            assert abs(mass - mass0) / mass0 <= 1e-12
            mass0 = mass

    def test_cfl_violation_raises(self, hydrogen, pipe):
        config = closed_config(hydrogen, pipe)
        state = gaussian_pulse_state(config)
        dt = 2.0 * stable_dt(state, hydrogen, config.cfl)
        with pytest.raises(StabilityError):
            step(state, config, InletProfile(base=1.0), dt)

    def test_divergence_names_first_bad_cell(self, hydrogen, pipe):
        config = closed_config(hydrogen, pipe)
        # absurd momentum overflows the flux computation in one step
        rho = np.full(64, 0.06)
        u = np.zeros(64)
        u[5] = 1e160
        state = SolverState(rho, u, 0.0, config.dx)
        with pytest.raises(DivergenceError) as err:
            step(state, config, InletProfile(base=1.0),
                 stable_dt(state, hydrogen, 0.9))
        assert err.value.index is not None
        assert str(err.value.index) in str(err.value)

    def test_acoustic_pulse_speed(self, hydrogen, pipe):
        # peak tracking against a 4x-refined run; both must travel at the
        # configured sound speed within 5 %
        a = hydrogen.sound_speed
        speeds = {}
        for n_cells in (200, 800):
            config = closed_config(hydrogen, pipe, n_cells=n_cells, cfl=0.5)
            state = gaussian_pulse_state(config, amplitude=1e-4, width=0.35,
                                         center=1.25)
            x = (np.arange(n_cells) + 0.5) * config.dx
            t1, t2 = 4e-4, 1.6e-3
            s1 = run_to(state, config, InletProfile(base=1.0), t1)
            s2 = run_to(s1, config, InletProfile(base=1.0), t2)

            def peak(s):
                half = n_cells // 2
                j = half + int(np.argmax(s.rho[half:]))
                y0, y1, y2 = s.rho[j - 1], s.rho[j], s.rho[j + 1]
                # parabolic sub-cell refinement
                denom = y0 - 2 * y1 + y2
                shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
                return x[j] + shift * config.dx

            speeds[n_cells] = (peak(s2) - peak(s1)) / (t2 - t1)
        assert speeds[800] == pytest.approx(a, rel=0.05)
        assert speeds[200] == pytest.approx(a, rel=0.05)

    def test_first_order_convergence(self, hydrogen, pipe):
        # L1 error of the advected pulse against an 8x-refined reference
        # halves (within 2 +/- 0.4) when dx halves
        t_end = 1.2e-3
        solutions = {}
        for n_cells in (100, 200, 1600):
            config = closed_config(hydrogen, pipe, n_cells=n_cells, cfl=0.5)
            state = gaussian_pulse_state(config, amplitude=1e-4, width=0.35,
                                         center=2.5)
            solutions[n_cells] = run_to(state, config, InletProfile(base=1.0), t_end).rho

        def restrict(fine, factor):
            return fine.reshape(-1, factor).mean(axis=1)

        err_100 = np.abs(solutions[100] - restrict(solutions[1600], 16)).mean()
        err_200 = np.abs(solutions[200] - restrict(solutions[1600], 8)).mean()
        ratio = err_100 / err_200
        assert 1.6 <= ratio <= 2.4


class TestTurbulenceProxies:
    def test_zero_velocity_gives_zeros(self, hydrogen, pipe):
        state = SolverState(np.full(8, 0.06), np.zeros(8), 0.0, 0.1)
        out = turbulence_proxies(state, hydrogen, pipe)
        for name in ("k", "omega", "nut"):
            np.testing.assert_array_equal(out[name], 0.0)

    def test_k_scales_as_u_to_175(self, hydrogen, pipe):
        u = np.full(8, 4.0)
        s1 = SolverState(np.full(8, 0.06), u, 0.0, 0.1)
        s2 = SolverState(np.full(8, 0.06), 3.0 * u, 0.0, 0.1)
        k1 = turbulence_proxies(s1, hydrogen, pipe)["k"]
        k2 = turbulence_proxies(s2, hydrogen, pipe)["k"]
        np.testing.assert_allclose(k2 / k1, 3.0**1.75, rtol=1e-12)

    def test_spot_values_hydrogen(self, hydrogen, pipe):
        # frozen hand evaluation of the correlation formulas at u = 21.7
        state = SolverState(np.full(8, 0.06), np.full(8, 21.7), 0.0, 0.1)
        out = turbulence_proxies(state, hydrogen, pipe)
        assert out["k"][0] == pytest.approx(1.6187639079411724, rel=1e-12)
        assert out["omega"][0] == pytest.approx(435.4899305708969, rel=1e-12)
        assert out["nut"][0] == pytest.approx(0.003717109844122196, rel=1e-12)
        assert out["nut"][0] == pytest.approx(out["k"][0] / out["omega"][0], rel=1e-12)


class TestGenerateDataset:
    def test_default_shape_and_span(self, hydrogen, pipe, default_inlet):
        config = SolverConfig(geometry=pipe, fluid=hydrogen, n_cells=64,
                              n_snapshots=50, dt_snap=0.002)
        data = generate_dataset(config, default_inlet, fields=("p", "Uz"))
        assert data.n_times == 50
        assert data.n_state == 128
        assert data.times[-1] == pytest.approx(0.1)
        assert data.dt == pytest.approx(0.002)

    def test_pressure_rows_only(self, hydrogen, pipe, default_inlet):
        config = SolverConfig(geometry=pipe, fluid=hydrogen, n_cells=64,
                              n_snapshots=10)
        data = generate_dataset(config, default_inlet, fields=("p",))
        assert data.n_state == 64

    def test_pressure_is_eos_of_density(self, hydrogen, pipe, default_inlet):
        config = SolverConfig(geometry=pipe, fluid=hydrogen, n_cells=64,
                              n_snapshots=5)
        data = generate_dataset(config, default_inlet, fields=("p",))
        assert np.all(data.raw_values() > 0)

    def test_proxies_flagged_synthetic(self, hydrogen, pipe, default_inlet):
        config = SolverConfig(geometry=pipe, fluid=hydrogen, n_cells=64,
                              n_snapshots=5)
        data = generate_dataset(config, default_inlet,
                                fields=("p", "Uz", "k", "omega", "nut"))
        assert not data.layout["p"].synthetic
        assert not data.layout["Uz"].synthetic
        for name in ("k", "omega", "nut"):
            assert data.layout[name].synthetic

    def test_constant_inlet_settles_to_steady_state(self, hydrogen, pipe):
        # long-run steady-state oracle: heavily damped run, settled window
        config = SolverConfig(
            geometry=pipe, fluid=hydrogen, n_cells=64, friction=0.1,
            dt_snap=0.01, n_snapshots=300,
        )
        inlet = InletProfile(base=21.7, amplitude=0.0, period=0.5)
        data = generate_dataset(config, inlet, fields=("p", "Uz"),
                                scaling="standardize")
        tail = data.values[:, -30:]
        assert np.max(np.abs(np.diff(tail, axis=1))) < 1e-8

    def test_deterministic_bit_identical(self, hydrogen, pipe, default_inlet):
        config = SolverConfig(geometry=pipe, fluid=hydrogen, n_cells=64,
                              n_snapshots=20)
        d1 = generate_dataset(config, default_inlet, fields=("p", "Uz"))
        d2 = generate_dataset(config, default_inlet, fields=("p", "Uz"))
        assert np.array_equal(d1.values, d2.values)
        assert np.array_equal(d1.times, d2.times)

    def test_unknown_field_rejected(self, hydrogen, pipe, default_inlet):
        config = SolverConfig(geometry=pipe, fluid=hydrogen, n_cells=64,
                              n_snapshots=5)
        with pytest.raises(DomainError):
            generate_dataset(config, default_inlet, fields=("vorticity",))


def test_long_run_mass_conservation(hydrogen, pipe, rng):
    # closed box, 1e5 steps: relative drift stays below 1e-9
    config = closed_config(hydrogen, pipe, n_cells=64)
    rho = 0.06 * (1.0 + 0.2 * rng.random(64))
    u = 2.0 * rng.standard_normal(64)
    state = SolverState(rho, u, 0.0, config.dx)
    mass0 = state.rho.sum() * state.dx
    inlet = InletProfile(base=1.0)
    for _ in range(100_000):
        state = step(state, config, inlet, stable_dt(state, hydrogen, 0.9))
    drift = abs(state.rho.sum() * state.dx - mass0) / mass0
    assert drift <= 1e-9
