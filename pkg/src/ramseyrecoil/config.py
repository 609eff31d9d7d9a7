"""Run configuration.

Configuration files are TOML with the sections ``[model]``, ``[grid]``,
``[schedule]``, ``[run]``, ``[spectrum]``, ``[sweep]`` and an optional
``[physical]``. Every key is optional; missing keys fall back to the quoted reference
parameters. Command-line overrides are applied on top with :meth:`RunConfig.with_overrides`.
"""

import logging
import math
import tomllib
from pathlib import Path
from typing import Any, Optional

import numpy as np
from anyio import open_file
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ramseyrecoil.errors import ConfigError
from ramseyrecoil.model import SCHEMA_VERSION
from ramseyrecoil.spectrum import DEFAULT_K_MAX, DEFAULT_K_POINTS, default_k_grid
from ramseyrecoil.types.mode import Stencil
from ramseyrecoil.types.model import DimensionlessParams, PhysicalParams, PulseSchedule
from ramseyrecoil.units import (
    REFERENCE_E0,
    REFERENCE_GAMMA,
    REFERENCE_LENGTH,
    REFERENCE_MAX_ORDER,
    REFERENCE_OMEGA_COEFF,
    REFERENCE_V_COEFF,
    REFERENCE_WAVELENGTH,
    superradiant_time,
)

logger = logging.getLogger(__name__)

StrPath = str | Path


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class ModelSection(_Section):
    """The ``[model]`` section."""

    delta: float = 0.5
    gamma: float = REFERENCE_GAMMA
    v_coeff: float = REFERENCE_V_COEFF
    omega_coeff: float = REFERENCE_OMEGA_COEFF
    e0: float = REFERENCE_E0
    k0L: float = 2.0 * math.pi * REFERENCE_LENGTH / REFERENCE_WAVELENGTH  # noqa: N815
    max_order: int = REFERENCE_MAX_ORDER
    dt: Optional[float] = None
    drop_spatial_derivatives: bool = False


class GridSection(_Section):
    """The ``[grid]`` section."""

    nx: int = Field(256, ge=16)
    stencil: Stencil = "central2"


class ScheduleSection(_Section):
    """The ``[schedule]`` section."""

    dt_pulse: float = 3e3
    tau: float = 3e4


class RunSection(_Section):
    """The ``[run]`` section."""

    record_every: int = Field(100, ge=1)
    snapshot_every: Optional[int] = Field(None, ge=1)
    output_dir: str = "runs"
    workers: Optional[int] = Field(None, ge=1)


class SpectrumSection(_Section):
    """The ``[spectrum]`` section."""

    k_max: float = Field(DEFAULT_K_MAX, gt=0)
    nk: int = Field(DEFAULT_K_POINTS, ge=3)
    modes: list[int] = Field(default_factory=lambda: [2, -2])


class SweepSection(_Section):
    """The ``[sweep]`` section."""

    tau_min: float = 3e3
    tau_max: float = 9e4
    tau_points: int = Field(50, ge=1)
    delta_min: float = -12.0
    delta_max: float = 12.0
    delta_points: int = Field(49, ge=1)
    delta_range: tuple[float, float] = (-12.0, 12.0)

    @property
    def tau_values(self) -> list[float]:
        """Uniform delays of a delay sweep."""
        return np.linspace(self.tau_min, self.tau_max, self.tau_points).tolist()

    @property
    def delta_values(self) -> list[float]:
        """Uniform detunings of a detuning sweep."""
        return np.linspace(self.delta_min, self.delta_max, self.delta_points).tolist()


class RunConfig(_Section):
    """Resolved configuration of a run or sweep."""

    schema_version: int = Field(SCHEMA_VERSION, alias="schema")
    model: ModelSection = Field(default_factory=ModelSection)
    grid: GridSection = Field(default_factory=GridSection)
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    run: RunSection = Field(default_factory=RunSection)
    spectrum: SpectrumSection = Field(default_factory=SpectrumSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    physical: Optional[PhysicalParams] = None

    def params(self) -> DimensionlessParams:
        """Build the dimensionless parameters.

        Raises:
            ConfigError: If the values violate a parameter invariant.

        """
        model = self.model.model_dump()
        max_order = model.pop("max_order")
        return _validated(
            DimensionlessParams,
            {**model, "mode_set": {"max_order": max_order}, "grid": self.grid.model_dump()},
            prefix="model",
        )

    def pulse_schedule(self, tau: Optional[float] = None) -> PulseSchedule:
        """Build the pulse schedule, optionally with another delay."""
        return _validated(
            PulseSchedule,
            {"dt_pulse": self.schedule.dt_pulse, "tau": self.schedule.tau if tau is None else tau},
            prefix="schedule",
        )

    def k_grid(self) -> np.ndarray:
        """Build the k-grid of the spectra."""
        return default_k_grid(self.spectrum.k_max, self.spectrum.nk)

    @property
    def tau_r(self) -> Optional[float]:
        """τ_R in seconds when a ``[physical]`` section is given."""
        return superradiant_time(self.physical) if self.physical is not None else None

    def snapshot(self) -> dict[str, Any]:
        """JSON-compatible dump of the whole configuration."""
        return self.model_dump(mode="json", by_alias=True)

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Return a copy with dotted keys (``"model.delta"``) replaced.

        Raises:
            ConfigError: If a key is unknown or a value is invalid.

        """
        data = self.model_dump(by_alias=True)
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            if section not in data or not name or not isinstance(data[section], dict) or name not in data[section]:
                raise ConfigError(f"Unknown override {key!r}", [key])
            data[section][name] = value
        return parse_config(data)


def _field_names(error: ValidationError, prefix: Optional[str] = None) -> list[str]:
    names = []
    for detail in error.errors():
        loc = ".".join(str(part) for part in detail["loc"])
        names.append(f"{prefix}.{loc}" if prefix and loc else (loc or prefix or ""))
    return names


def _config_error(error: ValidationError, prefix: Optional[str] = None) -> ConfigError:
    messages = [
        f"{name}: {detail['msg']}" for name, detail in zip(_field_names(error, prefix), error.errors())
    ]
    return ConfigError("Invalid configuration: " + "; ".join(messages), _field_names(error, prefix))


def _validated(model: type[BaseModel], data: dict[str, Any], prefix: str) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as error:
        raise _config_error(error, prefix) from error


def parse_config(data: dict[str, Any]) -> RunConfig:
    """Validate a configuration mapping.

    Raises:
        ConfigError: On unknown keys, bad values or an unsupported schema.

    """
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as error:
        raise _config_error(error) from error
    if config.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"Unsupported config schema {config.schema_version}", ["schema"])
    # surfaces parameter invariants (stability bound, tau >= dt_pulse) at load time
    config.params()
    config.pulse_schedule()
    _check_sweep(config.sweep, config.schedule)
    return config


def _check_sweep(sweep: SweepSection, schedule: ScheduleSection) -> None:
    """Reject sweep ranges no sweep could run."""
    if sweep.tau_min < schedule.dt_pulse:
        raise ConfigError(
            f"sweep.tau_min ({sweep.tau_min}) must not be shorter than schedule.dt_pulse ({schedule.dt_pulse})",
            ["sweep.tau_min"],
        )
    if sweep.tau_max < sweep.tau_min:
        raise ConfigError(
            f"sweep.tau_max ({sweep.tau_max}) is below sweep.tau_min ({sweep.tau_min})", ["sweep.tau_max"]
        )

    low, high = sweep.delta_range
    if low > high:
        raise ConfigError(f"sweep.delta_range {sweep.delta_range} is empty", ["sweep.delta_range"])
    if sweep.delta_max < sweep.delta_min:
        raise ConfigError(
            f"sweep.delta_max ({sweep.delta_max}) is below sweep.delta_min ({sweep.delta_min})", ["sweep.delta_max"]
        )
    outside = [name for name in ("delta_min", "delta_max") if not low <= getattr(sweep, name) <= high]
    if outside:
        raise ConfigError(
            f"Detunings {', '.join(outside)} lie outside sweep.delta_range [{low}, {high}]",
            [f"sweep.{name}" for name in outside],
        )


def parse_toml(text: str) -> RunConfig:
    """Parse TOML configuration text."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as error:
        raise ConfigError(f"Configuration is not valid TOML: {error}") from error
    return parse_config(data)


async def aload_config(path: Optional[StrPath] = None) -> RunConfig:
    """Asynchronously load a configuration file; no path gives the defaults."""
    if path is None:
        return parse_config({})
    try:
        async with await open_file(path, "r", encoding="utf-8") as f:
            text = await f.read()
    except OSError as error:
        raise ConfigError(f"Cannot read configuration {path}: {error}") from error
    logger.info("Loaded configuration %s", path)
    return parse_toml(text)


def load_config(path: Optional[StrPath] = None) -> RunConfig:
    """Load a configuration file; no path gives the defaults."""
    if path is None:
        return parse_config({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"Cannot read configuration {path}: {error}") from error
    logger.info("Loaded configuration %s", path)
    return parse_toml(text)


OVERRIDE_FIELDS: dict[str, str] = {
    "delta": "model.delta",
    "gamma": "model.gamma",
    "v_coeff": "model.v_coeff",
    "omega_coeff": "model.omega_coeff",
    "e0": "model.e0",
    "k0L": "model.k0L",
    "max_order": "model.max_order",
    "dt": "model.dt",
    "drop_spatial_derivatives": "model.drop_spatial_derivatives",
    "nx": "grid.nx",
    "stencil": "grid.stencil",
    "dt_pulse": "schedule.dt_pulse",
    "tau": "schedule.tau",
    "record_every": "run.record_every",
    "snapshot_every": "run.snapshot_every",
    "output_dir": "run.output_dir",
    "workers": "run.workers",
    "k_max": "spectrum.k_max",
    "nk": "spectrum.nk",
    "tau_min": "sweep.tau_min",
    "tau_max": "sweep.tau_max",
    "tau_points": "sweep.tau_points",
    "delta_min": "sweep.delta_min",
    "delta_max": "sweep.delta_max",
    "delta_points": "sweep.delta_points",
}
"""Command-line flag destinations mapped to configuration keys."""


def overrides_from_flags(flags: dict[str, Any]) -> dict[str, Any]:
    """Translate parsed command-line flags into dotted configuration overrides."""
    return {
        OVERRIDE_FIELDS[name]: value for name, value in flags.items() if name in OVERRIDE_FIELDS and value is not None
    }
