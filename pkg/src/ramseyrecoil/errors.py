"""Exceptions raised by ramseyrecoil.

Every exception keeps all of its constructor arguments in ``args`` so it survives the
pickling round trip between sweep worker processes and the parent.
"""

from typing import Any, Optional


class RamseyRecoilError(Exception):
    """Base class for all package errors."""

    def __str__(self) -> str:
        """Get the message of the error."""
        return str(self.args[0]) if self.args else self.__class__.__name__


class ConfigError(RamseyRecoilError):
    """Configuration could not be read or failed validation."""

    def __init__(self, message: str, fields: Optional[list[str]] = None):
        super().__init__(message, fields or [])

    @property
    def fields(self) -> list[str]:
        """Dotted names of the offending configuration fields."""
        return self.args[1]


class StructureError(RamseyRecoilError, ValueError):
    """Arrays or mode tables do not share the expected shape."""


class SimulationDivergedError(RamseyRecoilError):
    """A non-finite value appeared in the state."""

    def __init__(self, message: str, t: float, dt: float, phase: Optional[str] = None):
        super().__init__(message, t, dt, phase)

    @property
    def t(self) -> float:
        """Time (τ_R units) at the start of the failing step."""
        return self.args[1]

    @property
    def dt(self) -> float:
        """Step size of the failing step."""
        return self.args[2]

    @property
    def phase(self) -> Optional[str]:
        """Schedule phase in which the divergence happened."""
        return self.args[3]

    def in_phase(self, phase: str) -> "SimulationDivergedError":
        """Return a copy annotated with the schedule phase."""
        return SimulationDivergedError(
            f"{self.args[0]} during {phase}", self.t, self.dt, phase
        )


class UndefinedDistributionError(RamseyRecoilError, ValueError):
    """The momentum distribution of an all-zero amplitude cannot be normalised."""


class FitError(RamseyRecoilError):
    """The fringe fit did not converge or found no fringe above the noise floor."""

    def __init__(self, message: str, initial: Optional[dict[str, float]] = None):
        super().__init__(message, initial or {})

    @property
    def initial(self) -> dict[str, float]:
        """The DFT initialisation (omega, amplitude, phase, offset) used by the fit."""
        return self.args[1]


class SweepError(RamseyRecoilError):
    """One or more points of a sweep failed."""

    def __init__(self, message: str, failures: Optional[dict[float, str]] = None, partial: Any = None):
        super().__init__(message, failures or {}, partial)

    @property
    def failures(self) -> dict[float, str]:
        """Failed sweep coordinates mapped to their error messages."""
        return self.args[1]

    @property
    def partial(self) -> Any:
        """Whatever the sweep managed to produce before failing."""
        return self.args[2]
