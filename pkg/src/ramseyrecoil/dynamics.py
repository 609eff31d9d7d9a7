"""Time evolution of the truncated Maxwell–Schrödinger system.

This module assembles the right-hand side

    ∂ₜa_j = −v_j∂ₓa_j − iω_j a_j + Ē⁺ b_{j+1} + Ē⁻ b_{j−1}
    ∂ₜb_k = −v_k∂ₓb_k + (i(Δ − ω_k) − γ/2) b_k − E⁺ a_{k−1} − E⁻ a_{k+1}

and integrates it with classical RK4 through the two-pulse schedule. The fields are
recomputed from the stage state at every RK4 stage.
"""

import logging
import math
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from ramseyrecoil.errors import SimulationDivergedError, StructureError
from ramseyrecoil.fields import field_envelopes
from ramseyrecoil.graph import CouplingGraph
from ramseyrecoil.model import (
    FieldPair,
    FieldState,
    PopulationRecord,
    Snapshot,
    StateDerivative,
    Trajectory,
)
from ramseyrecoil.observables import populations
from ramseyrecoil.types.model import DEFAULT_TIME_STEP, DimensionlessParams, PulseSchedule
from ramseyrecoil.types.utils import EnvelopeFn, FieldSolver

logger = logging.getLogger(__name__)

SNAPSHOT_LABELS = {
    "pulse1": "after_pulse1",
    "free": "before_pulse2",
    "pulse2": "measurement",
}
"""Snapshot taken at the end of each schedule phase."""


class _Boundary(NamedTuple):
    """Rows of one amplitude array grouped by the sign of their velocity.

    Velocities are monotonic in the mode index, so each group is a contiguous block.
    ``right`` rows flow in at x = 0 and ``left`` rows at x = 1.
    """

    right: slice
    left: slice
    still: slice


def _row_block(mask: np.ndarray) -> slice:
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        return slice(0, 0)
    return slice(int(rows[0]), int(rows[-1]) + 1)


def _boundary(velocities: np.ndarray) -> _Boundary:
    return _Boundary(
        right=_row_block(velocities > 0),
        left=_row_block(velocities < 0),
        still=_row_block(velocities == 0),
    )


class _Kernel:
    """Right-hand side and RK4 step on raw amplitude arrays.

    Stage buffers are allocated once per kernel, so a kernel must not be shared
    between threads.
    """

    EXCITED_SIGN = -1.0
    """Sign of the field coupling in the excited-state equations."""

    def __init__(self, params: DimensionlessParams, field_solver: Optional[FieldSolver] = None):
        self.params = params
        self.mode_set = params.mode_set
        self.field_solver = field_solver
        self.slices = CouplingGraph(params.mode_set).partner_slices()
        self.spacing = params.grid.spacing
        self.stencil = params.grid.stencil
        self.advect = not params.drop_spatial_derivatives
        self.gamma = params.gamma

        ground = np.array(self.mode_set.ground_modes, dtype=np.float64)
        excited = np.array(self.mode_set.excited_modes, dtype=np.float64)
        self.v_ground = (params.v_coeff * ground)[:, None]
        self.v_excited = (params.v_coeff * excited)[:, None]
        self.rotation_ground = (-1j * params.omega_coeff * ground**2)[:, None]
        self.rotation_excited = (
            1j * (params.delta - params.omega_coeff * excited**2) - params.gamma / 2.0
        )[:, None]
        self.bounds_ground = _boundary(self.v_ground[:, 0])
        self.bounds_excited = _boundary(self.v_excited[:, 0])

        nx = params.grid.nx
        shape_a = (self.mode_set.n_ground, nx)
        shape_b = (self.mode_set.n_excited, nx)
        self._ka = [np.empty(shape_a, dtype=np.complex128) for _ in range(4)]
        self._kb = [np.empty(shape_b, dtype=np.complex128) for _ in range(4)]
        self._stage_a = np.empty(shape_a, dtype=np.complex128)
        self._stage_b = np.empty(shape_b, dtype=np.complex128)
        self._flux_a = np.empty(shape_a, dtype=np.complex128)
        self._flux_b = np.empty(shape_b, dtype=np.complex128)
        self._product = np.empty(shape_a, dtype=np.complex128)
        self._no_field = np.zeros(nx, dtype=np.complex128)

    def integral_dot(self, u: np.ndarray, w: np.ndarray) -> complex:
        """Trapezoid integral over x ∈ [0, 1] of Σ_rows ū·w."""
        total = np.vdot(u, w) - 0.5 * (np.vdot(u[:, 0], w[:, 0]) + np.vdot(u[:, -1], w[:, -1]))
        return complex(total * self.spacing)

    def transport(self, u: np.ndarray, v: np.ndarray, bounds: _Boundary, out: np.ndarray) -> None:
        """Fill ``out`` with v·∂ₓu, zero at the inflow node of every row."""
        if self.stencil == "central2":
            np.subtract(u[:, 2:], u[:, :-2], out=out[:, 1:-1])
            out[:, 1:-1] *= 0.5
            np.subtract(u[:, 1], u[:, 0], out=out[:, 0])
            np.subtract(u[:, -1], u[:, -2], out=out[:, -1])
        else:
            np.subtract(u[bounds.right, 1:], u[bounds.right, :-1], out=out[bounds.right, 1:])
            np.subtract(u[bounds.left, 1:], u[bounds.left, :-1], out=out[bounds.left, :-1])
            out[bounds.still] = 0.0
        out[bounds.right, 0] = 0.0
        out[bounds.left, -1] = 0.0
        out *= v
        out *= 1.0 / self.spacing

    def pin(self, a: np.ndarray, b: np.ndarray) -> float:
        """Zero the amplitudes at every inflow node in place.

        Returns:
            float: The norm removed, which counts as outflow.

        """
        if not self.advect:
            return 0.0
        removed = 0.0
        for u, bounds in ((a, self.bounds_ground), (b, self.bounds_excited)):
            removed += float(np.sum(np.abs(u[bounds.right, 0]) ** 2) + np.sum(np.abs(u[bounds.left, -1]) ** 2))
            u[bounds.right, 0] = 0.0
            u[bounds.left, -1] = 0.0
        return 0.5 * self.spacing * removed

    def fields(
        self, a: np.ndarray, b: np.ndarray, t: float, e0_now: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Get E⁺ and E⁻ for the given amplitudes."""
        if self.field_solver is None:
            return field_envelopes(a, b, e0_now, self.slices)

        pair = self.field_solver(FieldState(t=t, a=a, b=b, mode_set=self.mode_set), e0_now, self.mode_set)
        if pair.nx != a.shape[1]:
            raise StructureError(f"Field solver returned {pair.nx} points for a {a.shape[1]}-point grid")
        return pair.e_plus, pair.e_minus

    def evaluate(
        self,
        a: np.ndarray,
        b: np.ndarray,
        e_plus: np.ndarray,
        e_minus: np.ndarray,
        da: np.ndarray,
        db: np.ndarray,
    ) -> tuple[float, float]:
        """Fill ``da`` and ``db`` with the right-hand side for given fields.

        Amplitudes at an inflow node are held: their whole rate is zero.

        Returns:
            tuple[float, float]: The transport and spontaneous loss rates.

        """
        plus, minus = self.slices
        product = self._product
        sign = self.EXCITED_SIGN

        np.multiply(self.rotation_ground, a, out=da)
        np.multiply(e_plus.conj(), b[plus], out=product)
        da += product
        np.multiply(e_minus.conj(), b[minus], out=product)
        da += product

        np.multiply(self.rotation_excited, b, out=db)
        np.multiply(e_plus, a, out=product)
        product *= sign
        db[plus] += product
        np.multiply(e_minus, a, out=product)
        product *= sign
        db[minus] += product

        outflow = 0.0
        if self.advect:
            self.transport(a, self.v_ground, self.bounds_ground, self._flux_a)
            self.transport(b, self.v_excited, self.bounds_excited, self._flux_b)
            da -= self._flux_a
            db -= self._flux_b
            for rates, bounds in ((da, self.bounds_ground), (db, self.bounds_excited)):
                rates[bounds.right, 0] = 0.0
                rates[bounds.left, -1] = 0.0
            # norm carried off by transport: 2 Re Σ ∫ ū v ∂ₓu dx
            outflow = 2.0 * (self.integral_dot(a, self._flux_a) + self.integral_dot(b, self._flux_b)).real

        decay = self.gamma * self.integral_dot(b, b).real if self.gamma else 0.0
        return outflow, decay

    def derivative(
        self, a: np.ndarray, b: np.ndarray, t: float, e0_now: float, da: np.ndarray, db: np.ndarray
    ) -> tuple[float, float]:
        """Fill ``da`` and ``db`` with the right-hand side for self-consistent fields."""
        e_plus, e_minus = self.fields(a, b, t, e0_now)
        return self.evaluate(a, b, e_plus, e_minus, da, db)

    def outflow_rate(self, a: np.ndarray, b: np.ndarray) -> float:
        """Instantaneous transport loss rate of a state."""
        if not self.advect:
            return 0.0
        return self.evaluate(a, b, self._no_field, self._no_field, self._ka[0], self._kb[0])[0]

    def advance(
        self, a: np.ndarray, b: np.ndarray, t: float, dt: float, e0_now: float
    ) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Take one classical RK4 step.

        The loss rates of the four stages are combined with the RK4 weights, so the
        balance N + outflow + decay carries only the integrator's own error.

        Returns:
            tuple: New ``a`` and ``b`` and the outflow and decay accumulated over the step.

        """
        ka, kb = self._ka, self._kb
        stage_a, stage_b = self._stage_a, self._stage_b
        offsets = (0.5 * dt, 0.5 * dt, dt)
        weights = (1.0, 2.0, 2.0, 1.0)

        outflow = decay = 0.0
        x_a, x_b, x_t = a, b, t
        for i in range(4):
            stage_outflow, stage_decay = self.derivative(x_a, x_b, x_t, e0_now, ka[i], kb[i])
            outflow += weights[i] * stage_outflow
            decay += weights[i] * stage_decay
            if i < 3:
                np.multiply(ka[i], offsets[i], out=stage_a)
                stage_a += a
                np.multiply(kb[i], offsets[i], out=stage_b)
                stage_b += b
                x_a, x_b, x_t = stage_a, stage_b, t + offsets[i]

        sixth = dt / 6.0
        a_new = ka[1] + ka[2]
        a_new *= 2.0
        a_new += ka[0]
        a_new += ka[3]
        a_new *= sixth
        a_new += a
        b_new = kb[1] + kb[2]
        b_new *= 2.0
        b_new += kb[0]
        b_new += kb[3]
        b_new *= sixth
        b_new += b
        return a_new, b_new, sixth * outflow, sixth * decay


@lru_cache(maxsize=32)
def _kernel_for(params: DimensionlessParams, field_solver: Optional[FieldSolver]) -> _Kernel:
    return _Kernel(params, field_solver)


def _check_compatible(state: FieldState, params: DimensionlessParams) -> None:
    if state.mode_set != params.mode_set:
        raise StructureError(
            f"State has M={state.mode_set.max_order}, parameters have M={params.mode_set.max_order}"
        )
    if state.nx != params.grid.nx:
        raise StructureError(f"State has {state.nx} grid points, parameters have {params.grid.nx}")


def _check_finite(a: np.ndarray, b: np.ndarray, t: float, dt: float) -> None:
    if not np.isfinite(a.sum() + b.sum()):
        raise SimulationDivergedError(f"Non-finite amplitude in the step from t={t:.6g} (dt={dt:.3g})", t, dt)


def rhs(
    state: FieldState, fields: Optional[FieldPair], params: DimensionlessParams
) -> StateDerivative:
    """Evaluate the time derivative of a state for given field envelopes.

    The ∂ₓ terms use the grid's stencil and are left out when
    ``params.drop_spatial_derivatives`` is set. Couplings to modes outside the truncated
    set contribute nothing. At the inflow node of each moving mode (x = 0 for v > 0,
    x = 1 for v < 0) the amplitude is held at its boundary value, so its rate is zero.

    Args:
        state (FieldState): The state.
        fields (Optional[FieldPair]): Field envelopes computed from ``state``.
        params (DimensionlessParams): Model parameters.

    Returns:
        StateDerivative: ∂ₜa, ∂ₜb and the transport and spontaneous loss rates.

    Raises:
        StructureError: If ``fields`` is missing or does not match the state's grid.

    """
    if fields is None:
        raise StructureError("rhs needs the field pair of the state")
    _check_compatible(state, params)
    if fields.nx != state.nx:
        raise StructureError(f"Fields have {fields.nx} grid points, state has {state.nx}")

    da = np.empty(state.a.shape, dtype=np.complex128)
    db = np.empty(state.b.shape, dtype=np.complex128)
    outflow, decay = _kernel_for(params, None).evaluate(state.a, state.b, fields.e_plus, fields.e_minus, da, db)
    return StateDerivative(da=da, db=db, outflow_rate=outflow, decay_rate=decay)


def step(
    state: FieldState,
    params: DimensionlessParams,
    e0_of_t: EnvelopeFn | PulseSchedule,
    *,
    dt: Optional[float] = None,
    field_solver: Optional[FieldSolver] = None,
) -> FieldState:
    """Advance a state by one RK4 step.

    The incident amplitude is read at the start of the step and held over it, which is
    exact as long as steps do not straddle a pulse edge.
    Amplitudes at inflow nodes are set to zero first, and the removed norm is added to
    the outflow.

    Args:
        state (FieldState): The state at time ``state.t``.
        params (DimensionlessParams): Model parameters.
        e0_of_t (EnvelopeFn | PulseSchedule): Incident amplitude as a function of time,
            or a schedule whose envelope at ``params.e0`` is used.
        dt (Optional[float], optional): Step size. Defaults to ``params.time_step``.
        field_solver (Optional[FieldSolver], optional): Replaces the self-consistent
            field solver, e.g. with :func:`~ramseyrecoil.fields.constant_fields`.

    Returns:
        FieldState: The state at ``state.t + dt``.

    Raises:
        SimulationDivergedError: If a non-finite amplitude appears.

    """
    _check_compatible(state, params)
    step_dt = dt if dt is not None else params.time_step
    if isinstance(e0_of_t, PulseSchedule):
        e0_now = e0_of_t.envelope(state.t, params.e0)
    else:
        e0_now = e0_of_t(state.t)

    kernel = _kernel_for(params, field_solver)
    a, b = state.a.copy(), state.b.copy()
    pinned = kernel.pin(a, b)
    a, b, outflow, decay = kernel.advance(a, b, state.t, step_dt, e0_now)
    _check_finite(a, b, state.t, step_dt)
    return FieldState(
        t=state.t + step_dt,
        a=a,
        b=b,
        mode_set=state.mode_set,
        outflow=state.outflow + pinned + outflow,
        decay=state.decay + decay,
    )


class RamseySimulator:
    """Integrates the two-pulse Ramsey sequence for one parameter set."""

    def __init__(
        self,
        params: DimensionlessParams,
        *,
        record_every: Optional[int] = 100,
        snapshot_every: Optional[int] = None,
        field_solver: Optional[FieldSolver] = None,
    ):
        for name, value in (("record_every", record_every), ("snapshot_every", snapshot_every)):
            if value is not None and value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        self.params = params
        self.record_every = record_every
        self.snapshot_every = snapshot_every
        self._kernel = _Kernel(params, field_solver)

        if params.dt is None and params.time_step < DEFAULT_TIME_STEP:
            logger.warning(
                "Time step reduced to %.4g for detuning %.4g", params.time_step, params.delta
            )

    def _record(self, state: FieldState) -> PopulationRecord:
        return populations(state, outflow_rate=self._kernel.outflow_rate(state.a, state.b))

    def _evolve(
        self,
        state: FieldState,
        end: float,
        e0_now: float,
        phase: str,
        records: Optional[list[PopulationRecord]] = None,
        snapshots: Optional[list[Snapshot]] = None,
    ) -> FieldState:
        """Integrate at constant incident amplitude from ``state.t`` to ``end``.

        Step k starts at ``start + k·dt``; the last step is shortened to land on ``end``.
        """
        dt = self.params.time_step
        start = state.t
        n_steps = max(1, math.ceil((end - start) / dt - 1e-9))
        a, b = state.a.copy(), state.b.copy()
        outflow, decay = state.outflow + self._kernel.pin(a, b), state.decay

        for k in range(n_steps):
            t = start + k * dt
            h = end - t if k == n_steps - 1 else dt
            a, b, d_outflow, d_decay = self._kernel.advance(a, b, t, h, e0_now)
            outflow += d_outflow
            decay += d_decay

            try:
                _check_finite(a, b, t, h)
            except SimulationDivergedError as error:
                annotated = error.in_phase(phase)
                logger.error("%s", annotated)
                raise annotated from error

            if k == n_steps - 1:
                break
            done = k + 1
            want_record = records is not None and self.record_every and done % self.record_every == 0
            want_snapshot = snapshots is not None and self.snapshot_every and done % self.snapshot_every == 0
            if want_record or want_snapshot:
                current = FieldState(
                    t=start + done * dt, a=a, b=b, mode_set=self.params.mode_set, outflow=outflow, decay=decay
                )
                if want_record:
                    records.append(self._record(current))
                if want_snapshot:
                    snapshots.append(Snapshot(label=f"{phase}_step{done}", state=current, e0_now=e0_now))

        return FieldState(t=end, a=a, b=b, mode_set=self.params.mode_set, outflow=outflow, decay=decay)

    def run_ramsey(self, schedule: PulseSchedule) -> Trajectory:
        """Run the full two-pulse sequence from the canonical initial state.

        Pulse 1 drives [0, δt), the atoms evolve freely on [δt, τ) and pulse 2 drives
        [τ, τ + δt). Populations are recorded every ``record_every`` steps and at every
        phase end. A snapshot is kept at t = 0 and at every phase end, and every
        ``snapshot_every`` steps of a phase when that is set.

        Args:
            schedule (PulseSchedule): The pulse timing.

        Returns:
            Trajectory: Snapshots (the last one at τ + δt) and population records.

        Raises:
            SimulationDivergedError: If a step diverges; ``phase`` names the schedule phase.

        """
        params = self.params
        logger.info(
            "Ramsey run: delta=%.4g tau=%.6g dt_pulse=%.6g dt=%.4g M=%d nx=%d",
            params.delta,
            schedule.tau,
            schedule.dt_pulse,
            params.time_step,
            params.mode_set.max_order,
            params.grid.nx,
        )

        state = FieldState.initial(params.mode_set, params.grid)
        snapshots = [Snapshot(label="initial", state=state, e0_now=schedule.envelope(0.0, params.e0))]
        records = [self._record(state)]

        for phase, start, end in schedule.phases:
            e0_now = schedule.envelope(start, params.e0)
            logger.info("Phase %s on [%.6g, %.6g) with e0=%.4g", phase, start, end, e0_now)
            state = self._evolve(state, end, e0_now, phase, records, snapshots)
            record = self._record(state)
            records.append(record)
            snapshots.append(
                Snapshot(label=SNAPSHOT_LABELS[phase], state=state, e0_now=schedule.envelope(end, params.e0))
            )
            logger.debug(
                "After %s: S_0=%.8f norm=%.12f outflow=%.3g decay=%.3g",
                phase,
                record.s_ground[0],
                record.total_norm,
                record.outflow,
                record.decay,
            )

        logger.info("Ramsey run finished: S_0(tau+dt_pulse)=%.8f", records[-1].s_ground[0])
        return Trajectory(params=params, schedule=schedule, snapshots=snapshots, populations=records)

    def first_pulse(self, dt_pulse: float) -> FieldState:
        """Get the state right after a single pulse of duration ``dt_pulse``."""
        if dt_pulse <= 0:
            raise ValueError(f"dt_pulse must be positive, got {dt_pulse}")
        initial = FieldState.initial(self.params.mode_set, self.params.grid)
        return self._evolve(initial, dt_pulse, self.params.e0, "pulse1")


def run_ramsey(
    params: DimensionlessParams,
    schedule: PulseSchedule,
    *,
    record_every: Optional[int] = 100,
    snapshot_every: Optional[int] = None,
    field_solver: Optional[FieldSolver] = None,
) -> Trajectory:
    """Run the two-pulse Ramsey sequence; see :meth:`RamseySimulator.run_ramsey`."""
    simulator = RamseySimulator(
        params, record_every=record_every, snapshot_every=snapshot_every, field_solver=field_solver
    )
    return simulator.run_ramsey(schedule)


def first_pulse(
    params: DimensionlessParams,
    dt_pulse: float = 3e3,
    *,
    field_solver: Optional[FieldSolver] = None,
) -> FieldState:
    """Get the state right after the first pulse; see :meth:`RamseySimulator.first_pulse`."""
    return RamseySimulator(params, record_every=None, field_solver=field_solver).first_pulse(dt_pulse)
