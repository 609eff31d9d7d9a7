"""State and result models."""

# pylint: disable=no-member

import math
from datetime import datetime, timezone
from typing import Any, Optional

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_validator,
    model_validator,
)

from ramseyrecoil import __version__
from ramseyrecoil.errors import StructureError
from ramseyrecoil.types.mode import Channel, ModeIndex
from ramseyrecoil.types.model import DimensionlessParams, GridSpec, ModeSet, PulseSchedule
from ramseyrecoil.utils import stable_hash, wrap_phase

SCHEMA_VERSION = 1
"""Version of every file format written by the package."""

POPULATION_TOLERANCE = 1e-9
"""Slack allowed on populations outside [0, 1] from roundoff."""


def _complex_rows(value: Any) -> np.ndarray:
    array = np.asarray(value, dtype=np.complex128)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D (mode, x) array, got shape {array.shape}")
    return array


class FieldState(BaseModel):
    """Complex envelope amplitudes of every mode on the shared spatial grid.

    Row ``r`` of ``a`` holds the ground mode ``mode_set.ground_modes[r]`` and row ``r``
    of ``b`` the excited mode ``mode_set.excited_modes[r]``. ``outflow`` and ``decay``
    accumulate the norm that left through the boundaries and through spontaneous
    emission, so ``norm + outflow + decay`` is conserved by the dynamics.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: float = Field(0.0, description="Time in τ_R units.")
    a: np.ndarray = Field(..., description="Ground amplitudes, shape (n_ground, nx).")
    b: np.ndarray = Field(..., description="Excited amplitudes, shape (n_excited, nx).")
    mode_set: ModeSet = Field(default_factory=ModeSet)
    outflow: float = Field(0.0, description="Cumulative norm lost through the outflow boundaries.")
    decay: float = Field(0.0, description="Cumulative norm lost to spontaneous emission.")

    @field_validator("a", "b", mode="before")
    @classmethod
    def _as_complex(cls, value: Any) -> np.ndarray:
        return _complex_rows(value)

    @model_validator(mode="after")
    def _shapes(self) -> "FieldState":
        if self.a.shape[0] != self.mode_set.n_ground:
            raise ValueError(
                f"a has {self.a.shape[0]} rows, mode set has {self.mode_set.n_ground} ground modes"
            )
        if self.b.shape[0] != self.mode_set.n_excited:
            raise ValueError(
                f"b has {self.b.shape[0]} rows, mode set has {self.mode_set.n_excited} excited modes"
            )
        if self.a.shape[1] != self.b.shape[1]:
            raise ValueError(
                f"a and b live on different grids ({self.a.shape[1]} vs {self.b.shape[1]} points)"
            )
        return self

    @classmethod
    def zeros(cls, mode_set: ModeSet, grid: GridSpec, t: float = 0.0) -> "FieldState":
        """Get the all-zero state."""
        return cls(
            t=t,
            a=np.zeros((mode_set.n_ground, grid.nx), dtype=np.complex128),
            b=np.zeros((mode_set.n_excited, grid.nx), dtype=np.complex128),
            mode_set=mode_set,
        )

    @classmethod
    def initial(cls, mode_set: ModeSet, grid: GridSpec) -> "FieldState":
        """Get the canonical initial state: a₀ ≡ 1, every other amplitude zero."""
        a = np.zeros((mode_set.n_ground, grid.nx), dtype=np.complex128)
        a[mode_set.ground_index(0)] = 1.0
        return cls(
            t=0.0,
            a=a,
            b=np.zeros((mode_set.n_excited, grid.nx), dtype=np.complex128),
            mode_set=mode_set,
        )

    @property
    def nx(self) -> int:
        """Number of grid points."""
        return self.a.shape[1]

    @property
    def x(self) -> np.ndarray:
        """Grid coordinates on [0, 1]."""
        return np.linspace(0.0, 1.0, self.nx)

    def ground(self, mode: ModeIndex) -> np.ndarray:
        """Get the amplitude a_j of a ground mode."""
        return self.a[self.mode_set.ground_index(mode)]

    def excited(self, mode: ModeIndex) -> np.ndarray:
        """Get the amplitude b_j of an excited mode."""
        return self.b[self.mode_set.excited_index(mode)]

    def amplitude(self, mode: ModeIndex) -> np.ndarray:
        """Get the amplitude of any mode."""
        if self.mode_set.kind(mode) == "ground":
            return self.ground(mode)
        return self.excited(mode)

    def mirrored(self) -> "FieldState":
        """Apply the parity map a_j(x) → a_{−j}(1−x), b_j(x) → b_{−j}(1−x)."""
        return self.model_copy(update={"a": self.a[::-1, ::-1].copy(), "b": self.b[::-1, ::-1].copy()})

    def with_phase(self, phase: float) -> "FieldState":
        """Multiply every amplitude by a global phase factor."""
        factor = np.exp(1j * phase)
        return self.model_copy(update={"a": self.a * factor, "b": self.b * factor})


class StateDerivative(BaseModel):
    """Time derivative of a :class:`FieldState` together with its norm loss rates."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    da: np.ndarray = Field(..., description="Time derivative of the ground amplitudes.")
    db: np.ndarray = Field(..., description="Time derivative of the excited amplitudes.")
    outflow_rate: float = Field(0.0, description="Norm leaving per unit time through transport.")
    decay_rate: float = Field(0.0, description="Norm lost per unit time to spontaneous emission.")


class FieldPair(BaseModel):
    """Forward and backward field envelopes on the spatial grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    e_plus: np.ndarray = Field(..., description="Forward field E⁺(x).")
    e_minus: np.ndarray = Field(..., description="Backward field E⁻(x).")

    @field_validator("e_plus", "e_minus", mode="before")
    @classmethod
    def _as_complex(cls, value: Any) -> np.ndarray:
        return np.asarray(value, dtype=np.complex128)

    @model_validator(mode="after")
    def _same_grid(self) -> "FieldPair":
        if self.e_plus.shape != self.e_minus.shape or self.e_plus.ndim != 1:
            raise ValueError(
                f"E+ and E- must be 1-D arrays of one length, got {self.e_plus.shape} and {self.e_minus.shape}"
            )
        return self

    @property
    def nx(self) -> int:
        """Number of grid points."""
        return self.e_plus.shape[0]


class PopulationRecord(BaseModel):
    """Cloud populations and total norm at one instant."""

    model_config = ConfigDict(frozen=True)

    t: float = Field(..., description="Time in τ_R units.")
    s_ground: dict[ModeIndex, float] = Field(..., description="S_j of every ground mode.")
    p_excited: dict[ModeIndex, float] = Field(..., description="P_j of every excited mode.")
    outflow: float = Field(0.0, description="Cumulative transport loss up to t.")
    decay: float = Field(0.0, description="Cumulative spontaneous loss up to t.")
    outflow_rate: float = Field(0.0, description="Instantaneous transport loss rate.")

    @model_validator(mode="after")
    def _nonnegative(self) -> "PopulationRecord":
        for mode, value in {**self.s_ground, **self.p_excited}.items():
            if value < 0:
                raise ValueError(f"population of mode {mode} is negative ({value})")
        return self

    @computed_field
    @property
    def total_norm(self) -> float:
        """Σ S_j + Σ P_j."""
        return math.fsum(self.s_ground.values()) + math.fsum(self.p_excited.values())

    @property
    def excited_total(self) -> float:
        """Σ P_j over the excited modes."""
        return math.fsum(self.p_excited.values())

    @property
    def balance(self) -> float:
        """Norm plus everything that has left the sample; 1 for an exact integrator."""
        return self.total_norm + self.outflow + self.decay


class Snapshot(BaseModel):
    """A labelled copy of the full state."""

    model_config = ConfigDict(frozen=True)

    label: str = Field(..., description="Schedule point the snapshot was taken at.")
    state: FieldState
    e0_now: float = Field(0.0, description="Incident amplitude at the snapshot time.")

    @property
    def t(self) -> float:
        """Snapshot time."""
        return self.state.t


class Trajectory(BaseModel):
    """Snapshots and population records of one Ramsey run."""

    model_config = ConfigDict(frozen=True)

    params: DimensionlessParams
    schedule: PulseSchedule
    snapshots: list[Snapshot] = Field(default_factory=list)
    populations: list[PopulationRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def _increasing(self) -> "Trajectory":
        for name, times in (
            ("snapshot", [snap.t for snap in self.snapshots]),
            ("population", [record.t for record in self.populations]),
        ):
            if any(later <= earlier for earlier, later in zip(times, times[1:])):
                raise ValueError(f"{name} times must be strictly increasing")
        return self

    def at(self, label: str) -> Snapshot:
        """Get a snapshot by label.

        Raises:
            KeyError: If no snapshot carries the label.

        """
        for snap in self.snapshots:
            if snap.label == label:
                return snap
        raise KeyError(f"No snapshot labelled {label!r}; have {[s.label for s in self.snapshots]}")

    @property
    def final(self) -> FieldState:
        """State at the last snapshot (the measurement time of a full run)."""
        return self.snapshots[-1].state

    @property
    def measurement(self) -> PopulationRecord:
        """Populations at the last recorded time."""
        return self.populations[-1]

    @property
    def times(self) -> np.ndarray:
        """Times of the population records."""
        return np.array([record.t for record in self.populations])

    def ground_series(self, mode: ModeIndex) -> np.ndarray:
        """S_j over the population records."""
        return np.array([record.s_ground[mode] for record in self.populations])

    def excited_series(self, mode: ModeIndex) -> np.ndarray:
        """P_j over the population records."""
        return np.array([record.p_excited[mode] for record in self.populations])

    def norm_series(self) -> np.ndarray:
        """Total norm over the population records."""
        return np.array([record.total_norm for record in self.populations])


class MomentumSpectrum(BaseModel):
    """Normalised envelope momentum distribution of one ground cloud."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mode: ModeIndex
    k_grid: np.ndarray = Field(..., description="Envelope wavenumbers (1/L).")
    w: np.ndarray = Field(..., description="Probability density over k_grid.")
    kappa: float = Field(..., description="Mean envelope shift κ_j (1/L).")
    variance: float = Field(..., ge=0, description="Variance D_j (1/L²).")
    spectral_power: float = Field(..., description="∫|f_j|²dk / 2π over the window.")
    spatial_power: float = Field(..., description="∫|a_j|²dx.")

    @computed_field
    @property
    def window(self) -> tuple[float, float]:
        """Smallest and largest k of the grid."""
        return float(self.k_grid[0]), float(self.k_grid[-1])

    @property
    def parseval_error(self) -> float:
        """Relative mismatch between the spectral and the spatial power."""
        return abs(self.spectral_power - self.spatial_power) / self.spatial_power

    @property
    def std(self) -> float:
        """Standard deviation √D_j."""
        return math.sqrt(self.variance)


class RecoilReport(BaseModel):
    """Recoil momentum and frequency shifts of one moving cloud."""

    model_config = ConfigDict(frozen=True)

    mode: ModeIndex
    kappa: float = Field(..., description="Raw envelope shift κ_j (1/L).")
    k0L: float = Field(..., gt=0)  # noqa: N815
    delta_k_over_k0: float = Field(..., description="δk_j/k₀, sign-adjusted so ±j mirror each other.")
    std_over_k0: float = Field(..., description="D_j^½/k₀.")
    delta_omega_ratio: float = Field(..., description="δω_j/ω_j.")
    refraction_index_minus_1: float = Field(..., description="n − 1 = δk_j/(|j|k₀).")

    @model_validator(mode="after")
    def _identities(self) -> "RecoilReport":
        order = abs(self.mode)
        if order == 0:
            raise ValueError("the static cloud has no recoil report")
        expected = 2.0 * self.delta_k_over_k0 / order
        if not math.isclose(self.delta_omega_ratio, expected, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(
                f"delta_omega_ratio {self.delta_omega_ratio} != 2*delta_k_over_k0/|j| = {expected}"
            )
        if not math.isclose(self.refraction_index_minus_1, expected / 2.0, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("refraction_index_minus_1 must equal delta_k_over_k0/|j|")
        return self


class FringeSeries(BaseModel):
    """Populations at the measurement time over a list of delays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    delta: float = Field(..., description="Detuning of the sweep.")
    omega_coeff: float = Field(5e-5, description="Recoil frequency coefficient of the runs.")
    tau_values: np.ndarray
    s0: np.ndarray
    s2: np.ndarray
    s_minus2: np.ndarray

    @field_validator("tau_values", "s0", "s2", "s_minus2", mode="before")
    @classmethod
    def _as_float(cls, value: Any) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _consistent(self) -> "FringeSeries":
        n = self.tau_values.shape[0]
        for name in ("s0", "s2", "s_minus2"):
            values = getattr(self, name)
            if values.shape != (n,):
                raise ValueError(f"{name} has shape {values.shape}, expected ({n},)")
            if np.any(values < -POPULATION_TOLERANCE) or np.any(values > 1 + POPULATION_TOLERANCE):
                raise ValueError(f"{name} has populations outside [0, 1]")
        if np.any(np.diff(self.tau_values) <= 0):
            raise ValueError("tau_values must be strictly increasing")
        return self

    @property
    def omega_2(self) -> float:
        """Bare recoil frequency of the |±2⟩ clouds."""
        return 4.0 * self.omega_coeff

    def channel(self, name: Channel) -> np.ndarray:
        """Get the population series of a channel."""
        return getattr(self, name)


class FringeFit(BaseModel):
    """Single-cosine fit ``offset + amplitude·cos(omega_rec·τ + phase)`` of a fringe."""

    model_config = ConfigDict(frozen=True)

    channel: Channel = "s0"
    omega_rec: float = Field(..., gt=0, description="Fringe angular frequency (1/τ_R).")
    amplitude: float = Field(..., ge=0)
    phase: float = Field(..., description="Phase in (−π, π].")
    offset: float
    residual_rms: float = Field(..., ge=0)
    omega_2: float = Field(..., gt=0, description="Bare recoil frequency used for the ratio.")
    n_samples: int = Field(..., ge=1)
    nfev: int = Field(0, description="Function evaluations of the refinement.")

    @computed_field
    @property
    def omega_ratio(self) -> float:
        """omega_rec / ω₂."""
        return self.omega_rec / self.omega_2

    @property
    def relative_residual(self) -> float:
        """Residual RMS as a fraction of the amplitude."""
        return self.residual_rms / self.amplitude if self.amplitude else math.inf

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        """Evaluate the fitted model."""
        return self.offset + self.amplitude * np.cos(self.omega_rec * np.asarray(tau) + self.phase)


class FringeComparison(BaseModel):
    """Relative frequency and phase of two fringes, e.g. at opposite detunings."""

    model_config = ConfigDict(frozen=True)

    first: FringeFit
    second: FringeFit

    @computed_field
    @property
    def frequency_ratio(self) -> float:
        """omega_rec of the first fit over that of the second."""
        return self.first.omega_rec / self.second.omega_rec

    @computed_field
    @property
    def phase_difference(self) -> float:
        """Phase of the first fit minus that of the second, wrapped to (−π, π]."""
        return wrap_phase(self.first.phase - self.second.phase)


class DispersionRow(BaseModel):
    """Fringe and quantum-mean recoil estimates at one detuning."""

    model_config = ConfigDict(frozen=True)

    delta: float
    omega_ratio: Optional[float] = None
    fit_rms: Optional[float] = None
    kappa2_over_k0: Optional[float] = None
    kappa_minus2_over_k0: Optional[float] = None
    std2_over_k0: Optional[float] = None
    delta_omega_ratio_mean: Optional[float] = None
    delta_omega_ratio_fringe: Optional[float] = None
    delta_mhz: Optional[float] = None
    omega_rec_hz: Optional[float] = None
    error: Optional[str] = Field(None, description="Why part of the row is missing.")

    @property
    def is_gap(self) -> bool:
        """True when the row lacks any estimate."""
        return self.error is not None


class DispersionTable(BaseModel):
    """Rows of a detuning sweep, ordered by detuning."""

    model_config = ConfigDict(frozen=True)

    rows: list[DispersionRow] = Field(default_factory=list)
    tau_r: Optional[float] = Field(None, description="τ_R in seconds when known.")

    @property
    def deltas(self) -> np.ndarray:
        """Detunings of the rows."""
        return np.array([row.delta for row in self.rows])

    @property
    def failures(self) -> dict[float, str]:
        """Detunings whose row has a gap, with the reason."""
        return {row.delta: row.error for row in self.rows if row.error is not None}

    def column(self, name: str) -> np.ndarray:
        """Get a column as floats, NaN where the value is missing."""
        values = [getattr(row, name) for row in self.rows]
        return np.array([np.nan if value is None else value for value in values], dtype=np.float64)


class RunManifest(BaseModel):
    """Provenance record shared by every artifact of a run or sweep."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    schema_version: int = Field(SCHEMA_VERSION, alias="schema")
    config_snapshot: dict[str, Any] = Field(..., description="Resolved configuration.")
    code_version: str = __version__
    timestamp: str = Field(..., description="ISO-8601 creation time (UTC).")
    parameter_hash: str = Field(..., description="SHA-256 of the canonical config JSON.")
    outputs: list[str] = Field(default_factory=list, description="Artifact file names.")

    @classmethod
    def create(
        cls,
        config_snapshot: dict[str, Any],
        outputs: Optional[list[str]] = None,
        timestamp: Optional[str] = None,
    ) -> "RunManifest":
        """Build a manifest, hashing the configuration snapshot."""
        return cls(
            config_snapshot=config_snapshot,
            timestamp=timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
            parameter_hash=stable_hash(config_snapshot),
            outputs=list(outputs or []),
        )


class RunResult(BaseModel):
    """Everything a single Ramsey run produces."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    trajectory: Trajectory
    spectra: dict[ModeIndex, MomentumSpectrum] = Field(default_factory=dict)
    recoil: dict[ModeIndex, RecoilReport] = Field(default_factory=dict)
    manifest: Optional[RunManifest] = None

    @property
    def final_populations(self) -> PopulationRecord:
        """Populations at the measurement time."""
        return self.trajectory.measurement


def check_grid(state: FieldState, nx: int, what: str) -> None:
    """Raise :class:`StructureError` unless ``state`` lives on an ``nx``-point grid."""
    if state.nx != nx:
        raise StructureError(f"{what} has {nx} grid points, state has {state.nx}")
