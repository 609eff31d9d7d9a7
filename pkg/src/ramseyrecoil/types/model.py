"""Parameter and mode types."""

# pylint: disable=no-member

import math
from typing import Any, Optional

import numpy as np
from pydantic import (
    BaseModel,
    Field,
    computed_field,
    field_validator,
    model_validator,
)
from pydantic.config import ConfigDict
from scipy import constants

from ramseyrecoil.types.mode import ModeIndex, ModeKind, Stencil

DEFAULT_TIME_STEP = 0.1
"""Default RK4 step in τ_R units."""

STABILITY_LIMIT = 2.8
"""Largest dt·rate kept inside the RK4 stability region on the imaginary axis (2√2)."""


def default_time_step(delta: float) -> float:
    """Get the automatic time step for a detuning.

    The default step is reduced to ``0.2/max(1, |Δ|)`` once the detuning phase term
    dominates the stability bound.
    """
    return min(DEFAULT_TIME_STEP, 0.2 / max(1.0, abs(delta)))


class ModeSet(BaseModel):
    """Truncated lattice of photon-recoil momentum indices.

    Ground-state modes carry even indices ``0, ±2, …, ±M`` and excited-state modes odd
    indices ``±1, ±3, …, ±(M+1)``. ``M = 0`` leaves the reduced system ``a₀, b±₁``.
    """

    model_config = ConfigDict(frozen=True)

    max_order: int = Field(10, ge=0, description="Truncation order M (even).")

    @field_validator("max_order")
    @classmethod
    def _even_order(cls, value: int) -> int:
        if value % 2:
            raise ValueError(f"max_order must be even, got {value}")
        return value

    @computed_field
    @property
    def ground_modes(self) -> tuple[ModeIndex, ...]:
        """Even indices in ascending order."""
        return tuple(range(-self.max_order, self.max_order + 1, 2))

    @computed_field
    @property
    def excited_modes(self) -> tuple[ModeIndex, ...]:
        """Odd indices in ascending order."""
        return tuple(range(-self.max_order - 1, self.max_order + 2, 2))

    def __contains__(self, item: ModeIndex) -> bool:
        """Check if a mode index belongs to the set."""
        return item in self.ground_modes or item in self.excited_modes

    def kind(self, mode: ModeIndex) -> ModeKind:
        """Get whether a mode lives in the ground or the excited manifold."""
        if mode not in self:
            raise KeyError(f"Mode {mode} not in truncated set (M={self.max_order}).")
        return "ground" if mode % 2 == 0 else "excited"

    def ground_index(self, mode: ModeIndex) -> int:
        """Get the row of a ground mode in the state arrays."""
        if mode % 2 or abs(mode) > self.max_order:
            raise KeyError(f"Ground mode {mode} not in truncated set (M={self.max_order}).")
        return (mode + self.max_order) // 2

    def excited_index(self, mode: ModeIndex) -> int:
        """Get the row of an excited mode in the state arrays."""
        if mode % 2 == 0 or abs(mode) > self.max_order + 1:
            raise KeyError(f"Excited mode {mode} not in truncated set (M={self.max_order}).")
        return (mode + self.max_order + 1) // 2

    @property
    def n_ground(self) -> int:
        """Number of ground modes."""
        return self.max_order + 1

    @property
    def n_excited(self) -> int:
        """Number of excited modes."""
        return self.max_order + 2


class GridSpec(BaseModel):
    """Uniform spatial grid on x ∈ [0, 1]."""

    model_config = ConfigDict(frozen=True)

    nx: int = Field(256, ge=16, description="Number of grid points, boundaries included.")
    stencil: Stencil = Field("central2", description="Spatial difference stencil.")

    @property
    def spacing(self) -> float:
        """Grid spacing h = 1/(nx - 1)."""
        return 1.0 / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        """Grid coordinates."""
        return np.arange(self.nx) * self.spacing


class PhysicalParams(BaseModel):
    """Physical (SI) parameters of the condensate and the transition.

    Defaults are the ⁸⁷Rb D2 values used to model the experiment.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    length: float = Field(16e-6, gt=0, alias="L", description="Transversal size L (m).")
    density: float = Field(4.15e19, gt=0, alias="N0", description="Number density N₀ (m⁻³).")
    wavelength: float = Field(780e-9, gt=0, alias="lambda", description="Wavelength λ (m).")
    decay_rate: float = Field(0.37e8, gt=0, alias="Gamma", description="Spontaneous rate Γ (s⁻¹).")
    dipole: float = Field(2.07e-29, gt=0, alias="d", description="Transition dipole moment (C·m).")
    m_atom: float = Field(86.909180527 * constants.m_u, gt=0, description="Atomic mass (kg).")
    hbar: float = Field(constants.hbar, gt=0, description="Reduced Planck constant (J·s).")
    c: float = Field(constants.c, gt=0, description="Speed of light (m/s).")

    @model_validator(mode="after")
    def _many_periods(self) -> "PhysicalParams":
        if self.wavelength >= self.length:
            raise ValueError(
                f"lambda ({self.wavelength}) must be smaller than L ({self.length})"
            )
        return self

    @property
    def k0(self) -> float:
        """Vacuum wavenumber 2π/λ (m⁻¹)."""
        return 2.0 * math.pi / self.wavelength


class DimensionlessParams(BaseModel):
    """Complete dimensionless input of one simulation run.

    Lengths are in units of L, times in units of τ_R. ``dt = None`` selects the
    automatic step of :func:`default_time_step`.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    delta: float = Field(0.5, description="Detuning Δ (1/τ_R).")
    gamma: float = Field(5e-2, ge=0, description="Spontaneous rate γ = Γτ_R.")
    v_coeff: float = Field(7.8e-7, description="Recoil velocity coefficient, v_j = v_coeff·j.")
    omega_coeff: float = Field(5e-5, description="Recoil frequency coefficient, ω_j = omega_coeff·j².")
    e0: float = Field(6e-3, ge=0, description="Incident pulse amplitude E₀.")
    k0L: float = Field(  # noqa: N815
        2.0 * math.pi * 16e-6 / 780e-9, gt=0, description="Dimensionless optical wavenumber k₀L."
    )
    mode_set: ModeSet = Field(default_factory=ModeSet)
    grid: GridSpec = Field(default_factory=GridSpec)
    dt: Optional[float] = Field(None, gt=0, description="RK4 time step; None for automatic.")
    drop_spatial_derivatives: bool = Field(
        False, description="Omit the v_j ∂ₓ transport terms."
    )

    @model_validator(mode="after")
    def _stable_step(self) -> "DimensionlessParams":
        bound = self.time_step * self.stability_rate
        if bound >= STABILITY_LIMIT:
            raise ValueError(
                f"dt={self.time_step} violates the stability bound: "
                f"dt*rate={bound:.3g} >= {STABILITY_LIMIT}"
            )
        return self

    @property
    def time_step(self) -> float:
        """Resolved RK4 step."""
        return self.dt if self.dt is not None else default_time_step(self.delta)

    @property
    def omega_max(self) -> float:
        """Largest recoil frequency of the truncated set."""
        return abs(self.omega_coeff) * (self.mode_set.max_order + 1) ** 2

    @property
    def stability_rate(self) -> float:
        """Fastest rate of the linearised right-hand side."""
        rates = [abs(self.delta) + self.omega_max, 2.0 * self.e0, self.gamma / 2.0]
        if not self.drop_spatial_derivatives:
            v_max = abs(self.v_coeff) * (self.mode_set.max_order + 1)
            rates.append(v_max / self.grid.spacing)
        return max(rates)

    @property
    def omega_2(self) -> float:
        """Bare recoil frequency ω₂ of the |±2⟩ clouds."""
        return 4.0 * self.omega_coeff

    def v(self, mode: ModeIndex) -> float:
        """Dimensionless velocity v_j."""
        return self.v_coeff * mode

    def omega(self, mode: ModeIndex) -> float:
        """Dimensionless recoil frequency ω_j."""
        return self.omega_coeff * mode * mode

    def evolve(self, **changes: Any) -> "DimensionlessParams":
        """Return a validated copy with some fields replaced."""
        data = self.model_dump(exclude={"mode_set": {"ground_modes", "excited_modes"}})
        data.update(changes)
        return self.model_validate(data)


class PulseSchedule(BaseModel):
    """Two rectangular pulses of duration δt, the second starting at τ."""

    model_config = ConfigDict(frozen=True)

    dt_pulse: float = Field(3e3, gt=0, description="Pulse duration δt (τ_R units).")
    tau: float = Field(..., gt=0, description="Delay τ between pulse starts (τ_R units).")

    @model_validator(mode="after")
    def _no_overlap(self) -> "PulseSchedule":
        if self.tau < self.dt_pulse:
            raise ValueError(
                f"tau ({self.tau}) must not be shorter than dt_pulse ({self.dt_pulse})"
            )
        return self

    @computed_field
    @property
    def t_measure(self) -> float:
        """Measurement time τ + δt, when the second pulse has gone."""
        return self.tau + self.dt_pulse

    def envelope(self, t: float, e0: float) -> float:
        """Incident amplitude E₀(t): ``e0`` on [0, δt) ∪ [τ, τ+δt), zero elsewhere."""
        if 0.0 <= t < self.dt_pulse or self.tau <= t < self.t_measure:
            return e0
        return 0.0

    @property
    def phases(self) -> list[tuple[str, float, float]]:
        """Named schedule phases ``(name, start, end)`` with nonzero length."""
        phases = [
            ("pulse1", 0.0, self.dt_pulse),
            ("free", self.dt_pulse, self.tau),
            ("pulse2", self.tau, self.t_measure),
        ]
        return [phase for phase in phases if phase[2] > phase[1]]
