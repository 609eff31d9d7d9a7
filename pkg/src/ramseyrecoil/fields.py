"""Forward and backward field envelopes.

E⁺ builds up from x = 0 and E⁻ from x = 1:

    E⁺(x) = E₀ + 2 ∫₀ˣ Σ_j b_{j+1} ā_j dx′
    E⁻(x) = E₀ + 2 ∫ₓ¹ Σ_j b_{j−1} ā_j dx′

with the sums over the ground modes of the truncated set.
"""

from typing import Optional

import numpy as np

from ramseyrecoil.errors import StructureError
from ramseyrecoil.graph import CouplingGraph, PartnerSlices
from ramseyrecoil.model import FieldPair, FieldState
from ramseyrecoil.types.model import ModeSet
from ramseyrecoil.utils import cumulative_from_left


def field_envelopes(
    a: np.ndarray, b: np.ndarray, e0_now: float, slices: PartnerSlices
) -> tuple[np.ndarray, np.ndarray]:
    """Compute E⁺ and E⁻ from raw amplitude arrays.

    Args:
        a (np.ndarray): Ground amplitudes, shape (n_ground, nx).
        b (np.ndarray): Excited amplitudes, shape (n_excited, nx).
        e0_now (float): Incident amplitude.
        slices (PartnerSlices): Excited rows lined up with the ground rows.

    Returns:
        tuple[np.ndarray, np.ndarray]: The forward and backward envelopes.

    """
    conj_a = a.conj()
    source_plus = np.einsum("ij,ij->j", b[slices.plus], conj_a)
    source_minus = np.einsum("ij,ij->j", b[slices.minus], conj_a)
    # E⁻ integrates from x = 1: mirror its source so both run through one quadrature call
    running = 2.0 * cumulative_from_left(np.stack((source_plus, source_minus[::-1])))
    return e0_now + running[0], e0_now + running[1, ::-1]


def compute_fields(
    state: FieldState, e0_now: float, mode_set: Optional[ModeSet] = None
) -> FieldPair:
    """Compute the self-consistent field envelopes of a state.

    Args:
        state (FieldState): The state whose coherences source the fields.
        e0_now (float): Incident amplitude E₀(t) at the state's time.
        mode_set (Optional[ModeSet], optional): Mode set the caller expects. Defaults to
            the state's own.

    Returns:
        FieldPair: E⁺ and E⁻ on the state's grid.

    Raises:
        StructureError: If the state's mode set differs from ``mode_set``.
        ValueError: If ``e0_now`` is negative.

    """
    if mode_set is not None and mode_set != state.mode_set:
        raise StructureError(
            f"State has M={state.mode_set.max_order}, caller expects M={mode_set.max_order}"
        )
    if e0_now < 0:
        raise ValueError(f"e0_now must be nonnegative, got {e0_now}")

    slices = CouplingGraph(state.mode_set).partner_slices()
    e_plus, e_minus = field_envelopes(state.a, state.b, e0_now, slices)
    return FieldPair(e_plus=e_plus, e_minus=e_minus)


def constant_fields(
    state: FieldState, e0_now: float, mode_set: Optional[ModeSet] = None  # pylint: disable=unused-argument
) -> FieldPair:
    """Field solver with the atomic source switched off: E⁺ = E⁻ = E₀ everywhere."""
    flat = np.full(state.nx, e0_now, dtype=np.complex128)
    return FieldPair(e_plus=flat, e_minus=flat.copy())
