"""Cloud populations."""

import numpy as np

from ramseyrecoil.model import FieldState, PopulationRecord
from ramseyrecoil.utils import spatial_integral


def mode_norms(amplitudes: np.ndarray) -> np.ndarray:
    """∫₀¹|u|²dx for every row of an amplitude array."""
    return np.atleast_1d(spatial_integral(np.abs(amplitudes) ** 2))


def populations(state: FieldState, *, outflow_rate: float = 0.0) -> PopulationRecord:
    """Compute the population of every cloud.

    S_j = ∫|a_j|²dx for the ground clouds and P_j = ∫|b_j|²dx for the excited ones, by
    the same trapezoid rule the field solver uses.

    Args:
        state (FieldState): The state.
        outflow_rate (float, optional): Transport loss rate at the state, stored
            alongside. Defaults to 0.0.

    Returns:
        PopulationRecord: The populations, with the state's cumulative losses.

    """
    ground = mode_norms(state.a)
    excited = mode_norms(state.b)
    return PopulationRecord(
        t=state.t,
        s_ground={mode: float(value) for mode, value in zip(state.mode_set.ground_modes, ground)},
        p_excited={mode: float(value) for mode, value in zip(state.mode_set.excited_modes, excited)},
        outflow=state.outflow,
        decay=state.decay,
        outflow_rate=outflow_rate,
    )
