"""Envelope momentum distributions and recoil shifts.

The distribution of a ground cloud is taken from the Fourier transform of its slowly
varying envelope, f_j(k) = ∫₀¹ e^{−ikx} a_j(x) dx, evaluated by direct quadrature on an
arbitrary k-grid. The cloud's momentum is j·k₀ + κ_j, so κ_j is the recoil shift δk_j.
"""

import logging
import math
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from ramseyrecoil.errors import StructureError, UndefinedDistributionError
from ramseyrecoil.model import FieldState, MomentumSpectrum, RecoilReport
from ramseyrecoil.types.mode import ModeIndex
from ramseyrecoil.utils import is_symmetric, spatial_integral, symmetric_grid

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 64.0 * math.pi
DEFAULT_K_POINTS = 4096
_CHUNK = 512


def default_k_grid(k_max: float = DEFAULT_K_MAX, points: int = DEFAULT_K_POINTS) -> np.ndarray:
    """Get the symmetric k-grid the spectra are evaluated on."""
    return symmetric_grid(k_max, points)


def envelope_transform(amplitude: np.ndarray, x: np.ndarray, k_grid: np.ndarray) -> np.ndarray:
    """Evaluate f(k) = ∫ e^{−ikx} u(x) dx by the trapezoid rule for every k."""
    transform = np.empty(k_grid.shape[0], dtype=np.complex128)
    for start in range(0, k_grid.shape[0], _CHUNK):
        block = k_grid[start : start + _CHUNK]
        kernel = np.exp(-1j * np.outer(block, x))
        transform[start : start + _CHUNK] = trapezoid(kernel * amplitude, x, axis=1)
    return transform


def envelope_spectrum(
    state: FieldState, mode: ModeIndex, k_grid: Optional[np.ndarray] = None
) -> MomentumSpectrum:
    """Compute the normalised envelope momentum distribution of a ground cloud.

    w_j = |f_j|² / ∫|f_j|²dk, κ_j = ∫k·w_j dk and D_j = ∫(k − κ_j)²·w_j dk, all by the
    trapezoid rule on ``k_grid``.

    Args:
        state (FieldState): The state.
        mode (ModeIndex): An even mode index.
        k_grid (Optional[np.ndarray], optional): Envelope wavenumbers, symmetric about 0.
            Defaults to :func:`default_k_grid`.

    Returns:
        MomentumSpectrum: The distribution and its moments.

    Raises:
        StructureError: If ``mode`` is not a ground mode of the state or the k-grid is
            not symmetric.
        UndefinedDistributionError: If the amplitude vanishes identically.

    """
    if mode % 2 or mode not in state.mode_set:
        raise StructureError(f"Spectra are defined for ground modes only, got {mode}")
    k_grid = default_k_grid() if k_grid is None else np.asarray(k_grid, dtype=np.float64)
    if not is_symmetric(k_grid):
        raise StructureError("k_grid must be symmetric about 0")

    amplitude = state.ground(mode)
    spatial_power = float(spatial_integral(np.abs(amplitude) ** 2))
    if spatial_power == 0.0:
        raise UndefinedDistributionError(f"Mode {mode} has an all-zero amplitude")

    power = np.abs(envelope_transform(amplitude, state.x, k_grid)) ** 2
    norm = float(trapezoid(power, k_grid))
    if norm <= 0.0:
        raise UndefinedDistributionError(f"Mode {mode} has no spectral weight inside the k-window")

    w = power / norm
    kappa = float(trapezoid(k_grid * w, k_grid))
    variance = float(trapezoid((k_grid - kappa) ** 2 * w, k_grid))
    logger.debug("Spectrum of mode %d: kappa=%.8g D=%.6g", mode, kappa, variance)

    return MomentumSpectrum(
        mode=mode,
        k_grid=k_grid,
        w=w,
        kappa=kappa,
        variance=variance,
        spectral_power=norm / (2.0 * math.pi),
        spatial_power=spatial_power,
    )


def recoil_report(spectrum: MomentumSpectrum, k0L: float) -> RecoilReport:  # noqa: N803
    """Convert the envelope shift of a moving cloud into recoil shifts.

    δk_j/k₀ = sign(j)·κ_j/(k₀L) so that the |−j⟩ report mirrors the |+j⟩ one,
    δω_j/ω_j = 2·δk_j/(|j|k₀) and n − 1 = δk_j/(|j|k₀). For the |±2⟩ clouds this is
    δω₂/ω₂ = δk₂/k₀ and n − 1 = δk₂/(2k₀).

    Args:
        spectrum (MomentumSpectrum): Spectrum of a moving ground cloud.
        k0L (float): Dimensionless optical wavenumber.

    Returns:
        RecoilReport: The shifts in units of k₀ and ω_j.

    Raises:
        ValueError: For the static cloud j = 0.

    """
    if spectrum.mode == 0:
        raise ValueError("The static cloud j=0 has no recoil report")

    order = abs(spectrum.mode)
    delta_k_over_k0 = math.copysign(1.0, spectrum.mode) * spectrum.kappa / k0L
    return RecoilReport(
        mode=spectrum.mode,
        kappa=spectrum.kappa,
        k0L=k0L,
        delta_k_over_k0=delta_k_over_k0,
        std_over_k0=spectrum.std / k0L,
        delta_omega_ratio=2.0 * delta_k_over_k0 / order,
        refraction_index_minus_1=delta_k_over_k0 / order,
    )


def cloud_spectra(
    state: FieldState, modes: Optional[list[ModeIndex]] = None, k_grid: Optional[np.ndarray] = None
) -> dict[ModeIndex, MomentumSpectrum]:
    """Compute the spectra of several ground clouds, skipping the empty ones.

    Args:
        state (FieldState): The state.
        modes (Optional[list[ModeIndex]], optional): Ground modes. Defaults to every
            ground mode of the state.
        k_grid (Optional[np.ndarray], optional): Shared k-grid. Defaults to
            :func:`default_k_grid`.

    Returns:
        dict[ModeIndex, MomentumSpectrum]: Spectra keyed by mode, in the order given.

    """
    k_grid = default_k_grid() if k_grid is None else k_grid
    spectra = {}
    for mode in modes if modes is not None else state.mode_set.ground_modes:
        try:
            spectra[mode] = envelope_spectrum(state, mode, k_grid)
        except UndefinedDistributionError:
            logger.warning("Mode %d is empty; no spectrum", mode)
    return spectra
