"""Quadrature, grid and hashing helpers."""

import hashlib
import json
import math
from typing import Any

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid


def grid_spacing(values: np.ndarray) -> float:
    """Get the spacing of the uniform [0, 1] grid a sampled array lives on."""
    return 1.0 / (values.shape[-1] - 1)


def spatial_integral(values: np.ndarray) -> np.ndarray | float:
    """Integrate samples over x ∈ [0, 1] along the last axis (trapezoid rule)."""
    return trapezoid(values, dx=grid_spacing(values), axis=-1)


def cumulative_from_left(values: np.ndarray) -> np.ndarray:
    """Running integral ∫₀ˣ along the last axis, zero at x = 0."""
    return cumulative_trapezoid(values, dx=grid_spacing(values), axis=-1, initial=0)


def symmetric_grid(half_width: float, points: int) -> np.ndarray:
    """Uniform grid on [−half_width, half_width] whose negative half mirrors the positive half exactly.

    Args:
        half_width (float): Largest absolute value on the grid.
        points (int): Number of grid points (at least 3).

    Returns:
        np.ndarray: The grid, with ``grid[i] == -grid[-1 - i]`` bit for bit.

    """
    if points < 3:
        raise ValueError(f"A symmetric grid needs at least 3 points, got {points}.")
    step = 2.0 * half_width / (points - 1)
    if points % 2:
        positive = np.arange(1, points // 2 + 1) * step
        return np.concatenate((-positive[::-1], [0.0], positive))
    positive = (np.arange(points // 2) + 0.5) * step
    return np.concatenate((-positive[::-1], positive))


def is_symmetric(grid: np.ndarray, rtol: float = 1e-12) -> bool:
    """Check that a grid is symmetric about zero."""
    scale = float(np.max(np.abs(grid))) or 1.0
    return bool(np.all(np.abs(grid + grid[::-1]) <= rtol * scale))


def wrap_phase(phase: float) -> float:
    """Wrap an angle into (−π, π]."""
    wrapped = math.remainder(phase, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def canonical_json(value: Any) -> str:
    """Serialise a JSON-compatible value with sorted keys and no whitespace."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def stable_hash(value: Any) -> str:
    """SHA-256 digest of the canonical JSON of a value."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()
