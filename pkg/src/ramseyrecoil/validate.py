"""Fast invariant suite.

Each check runs a small configuration (few modes, coarse grid, short pulses) so the
suite finishes in seconds, and reports the measured deviation next to its tolerance.
"""

import logging
import math
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from ramseyrecoil.dynamics import run_ramsey, step
from ramseyrecoil.errors import RamseyRecoilError
from ramseyrecoil.fields import constant_fields
from ramseyrecoil.model import FieldState
from ramseyrecoil.spectrum import DEFAULT_K_MAX, DEFAULT_K_POINTS, default_k_grid, envelope_spectrum
from ramseyrecoil.types.model import DimensionlessParams, GridSpec, ModeSet, PulseSchedule

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6
PARITY_TOLERANCE = 1e-10
PARSEVAL_TOLERANCE = 0.02
RABI_TOLERANCE = 1e-8
DISSIPATION_TOLERANCE = 0.01


class PropertyResult(BaseModel):
    """Outcome of one invariant check."""

    model_config = ConfigDict(frozen=True)

    name: str
    passed: bool
    measured: float = Field(..., description="Measured deviation.")
    tolerance: float
    detail: str = ""


class ValidationReport(BaseModel):
    """Outcome of the whole suite."""

    model_config = ConfigDict(frozen=True)

    results: list[PropertyResult] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        """True when every property passed."""
        return all(result.passed for result in self.results)

    def __getitem__(self, name: str) -> PropertyResult:
        """Get a result by property name."""
        for result in self.results:
            if result.name == name:
                return result
        raise KeyError(name)

    def pretty_string(self) -> str:
        """One line per property."""
        return "\n".join(
            f"{'PASS' if r.passed else 'FAIL'} {r.name}: measured={r.measured:.3e} "
            f"tolerance={r.tolerance:.1e}{f' ({r.detail})' if r.detail else ''}"
            for r in self.results
        )


def _small_params(delta: float, gamma: float, **changes) -> DimensionlessParams:
    values = {
        "delta": delta,
        "gamma": gamma,
        "v_coeff": 1e-3,
        "omega_coeff": 5e-3,
        "e0": 0.05,
        "mode_set": ModeSet(max_order=2),
        "grid": GridSpec(nx=64),
        "dt": 0.1,
    }
    values.update(changes)
    return DimensionlessParams(**values)


_SMALL_SCHEDULE = PulseSchedule(dt_pulse=40.0, tau=80.0)


def check_norm_conservation(delta: float = 0.5) -> PropertyResult:
    """Without spontaneous decay, norm plus boundary outflow stays at 1."""
    trajectory = run_ramsey(_small_params(delta, 0.0), _SMALL_SCHEDULE, record_every=10)
    deviation = max(abs(record.balance - 1.0) for record in trajectory.populations)
    return PropertyResult(
        name="norm_conservation",
        passed=deviation <= NORM_TOLERANCE,
        measured=deviation,
        tolerance=NORM_TOLERANCE,
        detail=f"outflow={trajectory.measurement.outflow:.3e}",
    )


def check_parity(delta: float = 0.5) -> PropertyResult:
    """a_{−j}(x) = a_j(1−x) and b_{−j}(x) = b_j(1−x) at the measurement time."""
    state = run_ramsey(_small_params(delta, 0.05), _SMALL_SCHEDULE, record_every=None).final
    mirror = state.mirrored()
    deviation = float(max(np.max(np.abs(state.a - mirror.a)), np.max(np.abs(state.b - mirror.b))))
    return PropertyResult(
        name="parity", passed=deviation <= PARITY_TOLERANCE, measured=deviation, tolerance=PARITY_TOLERANCE
    )


def check_parseval() -> PropertyResult:
    """∫|f|²dk/2π matches ∫|a|²dx for a box envelope, improving as the window widens."""
    mode_set = ModeSet(max_order=0)
    state = FieldState.initial(mode_set, GridSpec(nx=256))
    default = envelope_spectrum(state, 0, default_k_grid()).parseval_error
    doubled = envelope_spectrum(state, 0, default_k_grid(2 * DEFAULT_K_MAX, 2 * DEFAULT_K_POINTS)).parseval_error
    return PropertyResult(
        name="parseval",
        passed=default <= PARSEVAL_TOLERANCE and doubled < default,
        measured=default,
        tolerance=PARSEVAL_TOLERANCE,
        detail=f"doubled window: {doubled:.3e}",
    )


def check_rabi_oracle(e0: float = 0.05, duration: float = 20.0, dt: float = 0.01) -> PropertyResult:
    """With constant fields the reduced a₀, b±₁ system oscillates as cos(√2·E₀·t)."""
    params = DimensionlessParams(
        delta=0.0,
        gamma=0.0,
        v_coeff=0.0,
        omega_coeff=0.0,
        e0=e0,
        mode_set=ModeSet(max_order=0),
        grid=GridSpec(nx=16),
        dt=dt,
    )
    state = FieldState.initial(params.mode_set, params.grid)
    deviation = 0.0
    for _ in range(round(duration / dt)):
        state = step(state, params, lambda _t: e0, field_solver=constant_fields)
        expected = math.cos(math.sqrt(2.0) * e0 * state.t)
        deviation = max(deviation, float(np.max(np.abs(state.ground(0) - expected))))
    return PropertyResult(
        name="rabi_oracle", passed=deviation <= RABI_TOLERANCE, measured=deviation, tolerance=RABI_TOLERANCE
    )


def check_dissipation(delta: float = 0.5, gamma: float = 0.05) -> PropertyResult:
    """d(N + outflow)/dt equals −γ Σ P_j inside every schedule phase."""
    trajectory = run_ramsey(_small_params(delta, gamma), _SMALL_SCHEDULE, record_every=1)
    if gamma == 0:
        decay = trajectory.measurement.decay
        return PropertyResult(
            name="dissipation_balance",
            passed=decay == 0.0,
            measured=abs(decay),
            tolerance=0.0,
            detail="gamma=0: decay rate identically zero",
        )

    records = trajectory.populations
    times = trajectory.times
    retained = np.array([record.total_norm + record.outflow for record in records])
    numeric = np.gradient(retained, times)
    expected = np.array([-gamma * record.excited_total for record in records])

    inside = []
    for _, start, end in trajectory.schedule.phases:
        for i in range(1, len(records) - 1):
            if start <= times[i - 1] and times[i + 1] <= end and records[i].excited_total > 1e-6:
                inside.append(i)
    if not inside:
        return PropertyResult(
            name="dissipation_balance", passed=False, measured=math.inf, tolerance=DISSIPATION_TOLERANCE,
            detail="no samples with excited population",
        )

    index = np.array(inside)
    deviation = float(np.max(np.abs(numeric[index] - expected[index])) / np.max(np.abs(expected[index])))
    return PropertyResult(
        name="dissipation_balance",
        passed=deviation <= DISSIPATION_TOLERANCE,
        measured=deviation,
        tolerance=DISSIPATION_TOLERANCE,
    )


def run_validation(*, delta: float = 0.5, gamma: float = 0.05) -> ValidationReport:
    """Run every invariant check.

    Args:
        delta (float, optional): Detuning of the dynamical checks. Defaults to 0.5.
        gamma (float, optional): Spontaneous rate of the dissipation check. Defaults to 0.05.

    Returns:
        ValidationReport: One result per property.

    """
    checks: dict[str, Callable[[], PropertyResult]] = {
        "norm_conservation": lambda: check_norm_conservation(delta),
        "parity": lambda: check_parity(delta),
        "parseval": check_parseval,
        "rabi_oracle": check_rabi_oracle,
        "dissipation_balance": lambda: check_dissipation(delta, gamma),
    }
    results = []
    for name, check in checks.items():
        try:
            result = check()
        except RamseyRecoilError as error:
            result = PropertyResult(name=name, passed=False, measured=math.inf, tolerance=0.0, detail=str(error))
        logger.info("%s %s: measured %.3e", "PASS" if result.passed else "FAIL", result.name, result.measured)
        results.append(result)
    return ValidationReport(results=results)
