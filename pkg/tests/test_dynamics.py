"""Test the right-hand side and the Ramsey integrator."""

import logging
import math

import numpy as np
import pytest

from ramseyrecoil.dynamics import RamseySimulator, _Kernel, first_pulse, rhs, run_ramsey, step
from ramseyrecoil.errors import SimulationDivergedError, StructureError
from ramseyrecoil.fields import compute_fields, constant_fields
from ramseyrecoil.model import FieldPair, FieldState
from ramseyrecoil.observables import populations
from ramseyrecoil.types.model import DimensionlessParams, GridSpec, ModeSet, PulseSchedule

SMALL_SCHEDULE = PulseSchedule(dt_pulse=20.0, tau=40.0)


def small_params(**changes) -> DimensionlessParams:
    """Fast M=2 parameter set."""
    values = {
        "delta": 0.5,
        "gamma": 0.05,
        "v_coeff": 1e-3,
        "omega_coeff": 5e-3,
        "e0": 0.05,
        "mode_set": ModeSet(max_order=2),
        "grid": GridSpec(nx=32),
        "dt": 0.1,
    }
    values.update(changes)
    return DimensionlessParams(**values)


def random_state(params: DimensionlessParams, rng: np.random.Generator) -> FieldState:
    """Random complex amplitudes on the parameter grid."""
    mode_set, nx = params.mode_set, params.grid.nx
    a = rng.normal(size=(mode_set.n_ground, nx)) + 1j * rng.normal(size=(mode_set.n_ground, nx))
    b = rng.normal(size=(mode_set.n_excited, nx)) + 1j * rng.normal(size=(mode_set.n_excited, nx))
    return FieldState(a=a, b=b, mode_set=mode_set)


def zero_inflow(state: FieldState, params: DimensionlessParams) -> FieldState:
    """Copy of a state with every moving mode cleared at its inflow node."""
    a, b = state.a.copy(), state.b.copy()
    for amplitudes, modes in ((a, params.mode_set.ground_modes), (b, params.mode_set.excited_modes)):
        for row, mode in enumerate(modes):
            if mode > 0:
                amplitudes[row, 0] = 0.0
            elif mode < 0:
                amplitudes[row, -1] = 0.0
    return state.model_copy(update={"a": a, "b": b})


def uniform_cloud(stencil: str) -> tuple[DimensionlessParams, FieldState]:
    """A uniform a2 cloud moving right at v=0.1 with no light."""
    params = DimensionlessParams(
        delta=0.0,
        gamma=0.0,
        v_coeff=0.05,
        omega_coeff=0.0,
        e0=0.0,
        mode_set=ModeSet(max_order=2),
        grid=GridSpec(nx=101, stencil=stencil),
        dt=0.01,
    )
    state = FieldState.zeros(params.mode_set, params.grid)
    a = state.a.copy()
    a[params.mode_set.ground_index(2)] = 1.0
    return params, state.model_copy(update={"a": a})


def oracle_rhs(state: FieldState, fields: FieldPair, params: DimensionlessParams) -> tuple[np.ndarray, np.ndarray]:
    """Mode-by-mode right-hand side written out loop by loop."""
    h = params.grid.spacing
    mode_set = params.mode_set

    def derivative(u: np.ndarray) -> np.ndarray:
        du = np.empty_like(u)
        du[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
        du[0] = (u[1] - u[0]) / h
        du[-1] = (u[-1] - u[-2]) / h
        return du

    def hold_inflow(rate: np.ndarray, v: float) -> None:
        if v > 0:
            rate[0] = 0.0
        elif v < 0:
            rate[-1] = 0.0

    def ground(j: int) -> np.ndarray:
        return state.ground(j) if abs(j) <= mode_set.max_order else np.zeros(state.nx)

    def excited(k: int) -> np.ndarray:
        return state.excited(k) if abs(k) <= mode_set.max_order + 1 else np.zeros(state.nx)

    da = np.zeros_like(state.a)
    for row, j in enumerate(mode_set.ground_modes):
        v = params.v_coeff * j
        da[row] = (
            -v * derivative(state.ground(j))
            - 1j * params.omega_coeff * j * j * state.ground(j)
            + np.conj(fields.e_plus) * excited(j + 1)
            + np.conj(fields.e_minus) * excited(j - 1)
        )
        hold_inflow(da[row], v)

    db = np.zeros_like(state.b)
    for row, k in enumerate(mode_set.excited_modes):
        v = params.v_coeff * k
        rate = 1j * (params.delta - params.omega_coeff * k * k) - params.gamma / 2.0
        db[row] = (
            -v * derivative(state.excited(k))
            + rate * state.excited(k)
            - fields.e_plus * ground(k - 1)
            - fields.e_minus * ground(k + 1)
        )
        hold_inflow(db[row], v)
    return da, db


class TestRhs:
    """Test the right-hand side."""

    def test_matches_oracle(self):
        """rhs agrees with the loop-by-loop oracle on random states."""
        params = small_params()
        rng = np.random.default_rng(7)
        for _ in range(100):
            state = random_state(params, rng)
            fields = FieldPair(
                e_plus=rng.normal(size=32) + 1j * rng.normal(size=32),
                e_minus=rng.normal(size=32) + 1j * rng.normal(size=32),
            )
            derivative = rhs(state, fields, params)
            da, db = oracle_rhs(state, fields, params)

            np.testing.assert_allclose(derivative.da, da, rtol=0, atol=1e-12)
            np.testing.assert_allclose(derivative.db, db, rtol=0, atol=1e-12)

    def test_initial_state(self):
        """From the initial state only the excited clouds b-1 and b1 start to fill."""
        params = small_params()
        state = FieldState.initial(params.mode_set, params.grid)
        derivative = rhs(state, constant_fields(state, 0.05), params)

        assert not np.any(derivative.da)
        np.testing.assert_allclose(derivative.db[1, :-1], -0.05)
        np.testing.assert_allclose(derivative.db[2, 1:], -0.05)
        assert derivative.db[1, -1] == 0.0
        assert derivative.db[2, 0] == 0.0
        assert not np.any(derivative.db[[0, 3]])
        assert derivative.decay_rate == 0.0

    def test_initial_state_without_transport(self):
        """Without transport b-1 and b1 fill at -E0 on the whole grid."""
        params = small_params(drop_spatial_derivatives=True)
        state = FieldState.initial(params.mode_set, params.grid)
        derivative = rhs(state, constant_fields(state, 0.05), params)

        np.testing.assert_allclose(derivative.db[[1, 2]], -0.05)

    @pytest.mark.parametrize("stencil", ["central2", "upwind1"])
    def test_inflow_held(self, stencil: str):
        """Moving modes have zero rate at their inflow node."""
        params = small_params(grid=GridSpec(nx=32, stencil=stencil))
        state = random_state(params, np.random.default_rng(3))
        derivative = rhs(state, compute_fields(state, 0.05), params)

        mode_set = params.mode_set
        for rates, modes in ((derivative.da, mode_set.ground_modes), (derivative.db, mode_set.excited_modes)):
            for row, mode in enumerate(modes):
                if mode > 0:
                    assert rates[row, 0] == 0.0
                elif mode < 0:
                    assert rates[row, -1] == 0.0
                else:
                    assert np.all(rates[row] != 0.0)

    def test_norm_rates(self):
        """The loss rates account for the whole norm change once inflow nodes are empty."""
        params = small_params(gamma=0.1)
        state = zero_inflow(random_state(params, np.random.default_rng(1)), params)
        derivative = rhs(state, compute_fields(state, 0.05), params)

        weights = np.full(state.nx, params.grid.spacing)
        weights[[0, -1]] /= 2.0
        norm_rate = 2.0 * np.real(
            np.sum(weights * (np.conj(state.a) * derivative.da).sum(axis=0))
            + np.sum(weights * (np.conj(state.b) * derivative.db).sum(axis=0))
        )
        assert norm_rate == pytest.approx(-(derivative.outflow_rate + derivative.decay_rate), abs=1e-10)

    def test_missing_fields(self):
        """rhs needs the field pair."""
        params = small_params()
        with pytest.raises(StructureError):
            rhs(FieldState.initial(params.mode_set, params.grid), None, params)

    def test_field_grid_mismatch(self):
        """Fields on another grid raise StructureError."""
        params = small_params()
        state = FieldState.initial(params.mode_set, params.grid)
        with pytest.raises(StructureError):
            rhs(state, FieldPair(e_plus=np.zeros(16), e_minus=np.zeros(16)), params)

    def test_no_transport(self):
        """Dropping the spatial derivatives leaves no outflow."""
        params = small_params(drop_spatial_derivatives=True)
        state = random_state(params, np.random.default_rng(2))
        assert rhs(state, compute_fields(state, 0.0), params).outflow_rate == 0.0


class TestStep:
    """Test the single RK4 step."""

    def test_rabi_oracle(self):
        """The reduced constant-field system oscillates as cos(sqrt(2) E0 t)."""
        e0 = 0.05
        params = DimensionlessParams(
            delta=0.0,
            gamma=0.0,
            v_coeff=0.0,
            omega_coeff=0.0,
            e0=e0,
            mode_set=ModeSet(max_order=0),
            grid=GridSpec(nx=16),
            dt=0.01,
        )
        state = FieldState.initial(params.mode_set, params.grid)
        for _ in range(500):
            state = step(state, params, lambda _t: e0, field_solver=constant_fields)
            expected = math.cos(math.sqrt(2.0) * e0 * state.t)
            np.testing.assert_allclose(state.ground(0), expected, rtol=0, atol=1e-8)

    def test_zero_state(self):
        """The empty state stays empty for any step size."""
        params = small_params()
        state = FieldState.zeros(params.mode_set, params.grid)
        for dt in (0.01, 0.1, 1.0):
            advanced = step(state, params, lambda _t: 0.05, dt=dt)
            assert not np.any(advanced.a)
            assert not np.any(advanced.b)
            assert advanced.outflow == 0.0

    @pytest.fixture(scope="class")
    def pulsed(self) -> FieldState:
        """Fixture for the small state after a 20 τ_R pulse."""
        return first_pulse(small_params(), 20.0)

    @staticmethod
    def _local_error(state: FieldState, dt: float) -> float:
        params = small_params()
        single = step(state, params, lambda _t: 0.05, dt=dt)
        reference = state
        for _ in range(64):
            reference = step(reference, params, lambda _t: 0.05, dt=dt / 64)
        return max(np.max(np.abs(single.a - reference.a)), np.max(np.abs(single.b - reference.b)))

    def test_fourth_order(self, pulsed: FieldState):
        """Halving the step shrinks the one-step error by about 2^5."""
        ratio = self._local_error(pulsed, 0.4) / self._local_error(pulsed, 0.2)
        assert 20.0 < ratio < 45.0

    @staticmethod
    def _euler(state: FieldState, dt: float, substeps: int) -> FieldState:
        params = small_params()
        h = dt / substeps
        for _ in range(substeps):
            derivative = rhs(state, compute_fields(state, 0.05), params)
            state = FieldState(
                t=state.t + h, a=state.a + h * derivative.da, b=state.b + h * derivative.db, mode_set=state.mode_set
            )
        return state

    def test_matches_fine_euler(self, pulsed: FieldState):
        """One RK4 step is the limit the sub-stepped explicit Euler converges to."""
        params = small_params()
        advanced = step(pulsed, params, lambda _t: 0.05, dt=0.1)

        def distance(other: FieldState) -> float:
            return max(np.max(np.abs(advanced.a - other.a)), np.max(np.abs(advanced.b - other.b)))

        coarse = distance(self._euler(pulsed, 0.1, 100))
        fine = distance(self._euler(pulsed, 0.1, 200))
        assert coarse < 1e-4
        assert coarse / fine == pytest.approx(2.0, rel=0.02)

    def test_step_time(self):
        """A step advances the time by dt, or by the given step."""
        params = small_params()
        state = FieldState.initial(params.mode_set, params.grid)

        assert step(state, params, SMALL_SCHEDULE).t == pytest.approx(0.1)
        assert step(state, params, SMALL_SCHEDULE, dt=0.05).t == pytest.approx(0.05)

    def test_incompatible_state(self):
        """A state of another truncation raises StructureError."""
        params = small_params()
        state = FieldState.initial(ModeSet(max_order=0), params.grid)
        with pytest.raises(StructureError):
            step(state, params, SMALL_SCHEDULE)


class TestAdvection:
    """Test transport of a uniform cloud through the box."""

    @staticmethod
    def _advect(stencil: str) -> tuple[np.ndarray, FieldState]:
        params, state = uniform_cloud(stencil)
        for _ in range(300):
            state = step(state, params, lambda _t: 0.0)
        return params.grid.x, state

    def test_upwind_front(self):
        """Empty atoms enter at x=0 and the front sits at x=vt=0.3."""
        x, state = self._advect("upwind1")
        a2 = np.abs(state.ground(2))

        assert state.t == pytest.approx(3.0)
        assert a2[0] == 0.0
        assert np.max(a2[x <= 0.1]) < 1e-3
        np.testing.assert_allclose(a2[x >= 0.6], 1.0, rtol=0, atol=1e-3)
        assert 0.64 < populations(state).s_ground[2] < 0.70

    def test_central_front(self):
        """The central stencil empties 0.3 of the cloud with the front at x=0.3."""
        x, state = self._advect("central2")
        a2 = np.abs(state.ground(2))

        assert a2[0] == 0.0
        np.testing.assert_allclose(a2[x >= 0.6], 1.0, rtol=0, atol=1e-3)
        assert populations(state).s_ground[2] == pytest.approx(0.695, abs=0.01)

    @pytest.mark.parametrize("stencil", ["central2", "upwind1"])
    def test_balance(self, stencil: str):
        """The outflow counts both the emptied inflow node and the transport loss."""
        _, state = self._advect(stencil)
        record = populations(state)

        assert record.balance == pytest.approx(1.0, abs=1e-3)
        assert not np.any(state.b)


class TestRamseySimulator:
    """Test the two-pulse integrator."""

    @pytest.fixture(scope="class")
    def trajectory(self):
        """Fixture for a small Ramsey run."""
        return run_ramsey(small_params(), SMALL_SCHEDULE, record_every=10)

    def test_snapshots(self, trajectory):
        """Snapshots sit at the start and at every phase end."""
        assert [snap.label for snap in trajectory.snapshots] == [
            "initial",
            "after_pulse1",
            "before_pulse2",
            "measurement",
        ]
        assert [snap.t for snap in trajectory.snapshots] == [0.0, 20.0, 40.0, 60.0]
        assert trajectory.at("after_pulse1").e0_now == 0.0
        assert trajectory.at("before_pulse2").e0_now == 0.05

    def test_records(self, trajectory):
        """Records start at t=0, end at the measurement time and increase strictly."""
        times = trajectory.times
        assert times[0] == 0.0
        assert times[-1] == 60.0
        assert np.all(np.diff(times) > 0)
        assert trajectory.measurement.s_ground[0] < 1.0

    def test_balance(self, trajectory):
        """Norm plus losses stays at 1."""
        for record in trajectory.populations:
            assert record.balance == pytest.approx(1.0, abs=1e-6)
        assert trajectory.measurement.decay > 0.0

    def test_parity(self, trajectory):
        """The state stays invariant under the parity map."""
        final = trajectory.final
        mirror = final.mirrored()
        np.testing.assert_allclose(final.a, mirror.a, rtol=0, atol=1e-10)
        np.testing.assert_allclose(final.b, mirror.b, rtol=0, atol=1e-10)

    def test_conservation_without_losses(self):
        """Without transport and decay the plain norm is conserved."""
        params = small_params(gamma=0.0, drop_spatial_derivatives=True)
        trajectory = run_ramsey(params, SMALL_SCHEDULE, record_every=50)

        np.testing.assert_allclose(trajectory.norm_series(), 1.0, rtol=0, atol=1e-6)
        assert trajectory.measurement.outflow == 0.0
        assert trajectory.measurement.decay == 0.0

    def test_deterministic(self, trajectory):
        """Identical inputs give bit-identical states."""
        again = run_ramsey(small_params(), SMALL_SCHEDULE, record_every=None)
        np.testing.assert_array_equal(again.final.a, trajectory.final.a)
        np.testing.assert_array_equal(again.final.b, trajectory.final.b)

    def test_fractional_phases(self):
        """Phase lengths that are not step multiples end exactly on the boundaries."""
        schedule = PulseSchedule(dt_pulse=1.05, tau=2.33)
        trajectory = run_ramsey(small_params(), schedule, record_every=1)

        assert [snap.t for snap in trajectory.snapshots[1:]] == [1.05, 2.33, schedule.t_measure]

    def test_first_pulse(self, trajectory):
        """first_pulse reproduces the state after pulse 1 of a full run."""
        state = first_pulse(small_params(), 20.0)

        assert state.t == 20.0
        np.testing.assert_array_equal(state.a, trajectory.at("after_pulse1").state.a)

    def test_time_step_warning(self, caplog: pytest.LogCaptureFixture):
        """An automatically reduced step is logged."""
        with caplog.at_level(logging.WARNING, logger="ramseyrecoil.dynamics"):
            RamseySimulator(small_params(delta=5.0, dt=None))
        assert "Time step reduced" in caplog.text

    def test_invalid_record_every(self):
        """record_every must be positive."""
        with pytest.raises(ValueError):
            RamseySimulator(small_params(), record_every=0)

    def test_periodic_snapshots(self):
        """snapshot_every adds labelled mid-phase snapshots in time order."""
        trajectory = run_ramsey(small_params(), SMALL_SCHEDULE, record_every=None, snapshot_every=100)

        assert [snap.label for snap in trajectory.snapshots] == [
            "initial",
            "pulse1_step100",
            "after_pulse1",
            "free_step100",
            "before_pulse2",
            "pulse2_step100",
            "measurement",
        ]
        assert [snap.t for snap in trajectory.snapshots] == pytest.approx([0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0])
        assert trajectory.at("free_step100").e0_now == 0.0

    def test_default_snapshots_phase_ends_only(self, trajectory):
        """Without snapshot_every only the phase ends are kept."""
        assert len(trajectory.snapshots) == 4

    def test_invalid_snapshot_every(self):
        """snapshot_every must be positive."""
        with pytest.raises(ValueError):
            RamseySimulator(small_params(), snapshot_every=0)

    def test_divergence(self, mocker):
        """A non-finite amplitude aborts the run and names the phase."""
        mocker.patch.object(_Kernel, "advance", lambda self, a, b, t, dt, e0: (a * np.nan, b, 0.0, 0.0))

        with pytest.raises(SimulationDivergedError) as error:
            run_ramsey(small_params(), SMALL_SCHEDULE)

        assert error.value.phase == "pulse1"
        assert error.value.t == 0.0
