"""Physical to dimensionless unit conversion.

Times are measured in the superradiant time constant τ_R = ħ/(π d² k₀ N₀ L) and
lengths in the sample size L. The τ_R formula is evaluated in Gaussian units, the
system its prefactor is written in; evaluating it with SI values is off by orders of
magnitude.
"""

import logging
import math
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

from ramseyrecoil.types.model import DimensionlessParams, GridSpec, ModeSet, PhysicalParams

logger = logging.getLogger(__name__)

REFERENCE_V_COEFF = 7.8e-7
REFERENCE_OMEGA_COEFF = 5e-5
REFERENCE_GAMMA = 5e-2
REFERENCE_E0 = 6e-3
REFERENCE_MAX_ORDER = 10
REFERENCE_LENGTH = 16e-6
REFERENCE_WAVELENGTH = 780e-9

# SI → Gaussian factors
_ERG_PER_JOULE = 1e7
_CM_PER_M = 1e2
_ESU_PER_COULOMB_OVER_C = 10.0


class DerivedParams(BaseModel):
    """Dimensionless parameters derived from physical ones, with the time unit."""

    model_config = ConfigDict(frozen=True)

    params: DimensionlessParams
    tau_r: float = Field(..., gt=0, description="Superradiant time constant τ_R (s).")

    def seconds(self, t: float) -> float:
        """Convert a dimensionless time to seconds."""
        return t * self.tau_r

    def hertz(self, omega: float) -> float:
        """Convert a dimensionless angular frequency to an ordinary frequency (Hz)."""
        return frequency_hz(omega, self.tau_r)


def superradiant_time(physical: PhysicalParams) -> float:
    """Evaluate τ_R in seconds from SI inputs.

    Args:
        physical (PhysicalParams): The physical parameters.

    Returns:
        float: τ_R = ħ/(π d² k₀ N₀ L) with every quantity converted to Gaussian units.

    """
    hbar = physical.hbar * _ERG_PER_JOULE
    dipole = physical.dipole * physical.c * _ESU_PER_COULOMB_OVER_C * _CM_PER_M
    k0 = physical.k0 / _CM_PER_M
    density = physical.density / _CM_PER_M**3
    length = physical.length * _CM_PER_M
    return hbar / (math.pi * dipole**2 * k0 * density * length)


def derive_dimensionless(
    physical: PhysicalParams,
    *,
    delta: float = 0.5,
    e0: float = REFERENCE_E0,
    mode_set: Optional[ModeSet] = None,
    grid: Optional[GridSpec] = None,
    **overrides: Any,
) -> DerivedParams:
    """Derive the dimensionless model from physical parameters.

    γ = Γτ_R, v_coeff = ħk₀τ_R/(mL), omega_coeff = ħk₀²τ_R/(2m) and k0L = k₀L. The
    drive, mode set and grid are not physical inputs and default to the reference set.

    Args:
        physical (PhysicalParams): The physical parameters.
        delta (float, optional): Detuning in units of 1/τ_R. Defaults to 0.5.
        e0 (float, optional): Pulse amplitude. Defaults to 6e-3.
        mode_set (Optional[ModeSet], optional): Truncated mode set. Defaults to M = 10.
        grid (Optional[GridSpec], optional): Spatial grid. Defaults to 256 points.
        **overrides: Further :class:`DimensionlessParams` fields (``dt``, ``drop_spatial_derivatives``).

    Returns:
        DerivedParams: The dimensionless parameters and τ_R in seconds.

    """
    tau_r = superradiant_time(physical)
    k0 = physical.k0
    params = DimensionlessParams(
        delta=delta,
        gamma=physical.decay_rate * tau_r,
        v_coeff=physical.hbar * k0 * tau_r / (physical.m_atom * physical.length),
        omega_coeff=physical.hbar * k0**2 * tau_r / (2.0 * physical.m_atom),
        e0=e0,
        k0L=k0 * physical.length,
        mode_set=mode_set or ModeSet(max_order=REFERENCE_MAX_ORDER),
        grid=grid or GridSpec(),
        **overrides,
    )
    logger.debug(
        "Derived tau_R=%.6g s, gamma=%.6g, v_coeff=%.6g, omega_coeff=%.6g",
        tau_r,
        params.gamma,
        params.v_coeff,
        params.omega_coeff,
    )
    return DerivedParams(params=params, tau_r=tau_r)


def reference_defaults(delta: float = 0.5, **overrides: Any) -> DimensionlessParams:
    """Get the quoted dimensionless parameter set.

    The values are taken as published, independently of :func:`derive_dimensionless`
    (they disagree with the quoted τ_R by about 20 %).
    """
    values: dict[str, Any] = {
        "delta": delta,
        "gamma": REFERENCE_GAMMA,
        "v_coeff": REFERENCE_V_COEFF,
        "omega_coeff": REFERENCE_OMEGA_COEFF,
        "e0": REFERENCE_E0,
        "k0L": 2.0 * math.pi * REFERENCE_LENGTH / REFERENCE_WAVELENGTH,
        "mode_set": ModeSet(max_order=REFERENCE_MAX_ORDER),
        "grid": GridSpec(),
    }
    values.update(overrides)
    return DimensionlessParams(**values)


def detuning_mhz(delta: float, tau_r: float) -> float:
    """Convert a dimensionless detuning to MHz."""
    return delta / (2.0 * math.pi * tau_r) / 1e6


def frequency_hz(omega: float, tau_r: float) -> float:
    """Convert a dimensionless angular frequency to Hz."""
    return omega / (2.0 * math.pi * tau_r)
