"""Test the utils module."""

import math

import numpy as np
import pytest

from ramseyrecoil.utils import (
    canonical_json,
    cumulative_from_left,
    is_symmetric,
    spatial_integral,
    stable_hash,
    symmetric_grid,
    wrap_phase,
)


class TestQuadrature:
    """Test the quadrature helpers."""

    def test_spatial_integral(self):
        """A linear function is integrated exactly."""
        x = np.linspace(0.0, 1.0, 33)
        assert spatial_integral(np.ones(33)) == pytest.approx(1.0, abs=1e-15)
        assert spatial_integral(x) == pytest.approx(0.5, abs=1e-15)

    def test_spatial_integral_rows(self):
        """Rows are integrated independently."""
        values = np.vstack((np.ones(17), 2.0 * np.ones(17)))
        np.testing.assert_allclose(spatial_integral(values), [1.0, 2.0], atol=1e-15)

    def test_cumulative_ends(self):
        """The running integral vanishes at x = 0 and reaches the full integral at x = 1."""
        values = np.sin(np.linspace(0.0, 1.0, 65))
        left = cumulative_from_left(values)

        assert left[0] == 0.0
        assert left[-1] == pytest.approx(spatial_integral(values), abs=1e-14)

    def test_cumulative_rows(self):
        """Stacked rows are integrated independently."""
        values = np.random.default_rng(3).normal(size=(2, 41))
        stacked = cumulative_from_left(values)
        np.testing.assert_allclose(stacked[1], cumulative_from_left(values[1]), rtol=0, atol=1e-14)


class TestGrids:
    """Test the symmetric grid helpers."""

    @pytest.mark.parametrize("points", [pytest.param(3, id="3"), pytest.param(8, id="8"), pytest.param(4097, id="4097")])
    def test_symmetric_grid(self, points: int):
        """The grid mirrors bit for bit and spans the half width."""
        grid = symmetric_grid(10.0, points)

        assert grid.shape == (points,)
        np.testing.assert_array_equal(grid, -grid[::-1])
        assert grid[-1] == pytest.approx(10.0, rel=1e-12)
        assert is_symmetric(grid)

    def test_too_few_points(self):
        """A symmetric grid needs at least 3 points."""
        with pytest.raises(ValueError):
            symmetric_grid(1.0, 2)

    def test_not_symmetric(self):
        """A shifted grid is not symmetric."""
        assert not is_symmetric(np.linspace(-1.0, 2.0, 11))


class TestPhaseAndHash:
    """Test wrap_phase and the hashing helpers."""

    @pytest.mark.parametrize(
        "phase, expected",
        [
            pytest.param(0.5, 0.5, id="inside"),
            pytest.param(math.pi, math.pi, id="upper_edge"),
            pytest.param(-math.pi, math.pi, id="lower_edge"),
            pytest.param(2.0 * math.pi + 0.25, 0.25, id="wrapped"),
            pytest.param(-0.5 - 4.0 * math.pi, -0.5, id="negative"),
        ],
    )
    def test_wrap_phase(self, phase: float, expected: float):
        """Phases land in (-pi, pi]."""
        assert wrap_phase(phase) == pytest.approx(expected, abs=1e-12)

    def test_canonical_json(self):
        """Keys are sorted and whitespace dropped."""
        assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'

    def test_stable_hash(self):
        """The hash ignores key order and changes with the values."""
        assert stable_hash({"a": 1, "b": 2}) == stable_hash({"b": 2, "a": 1})
        assert stable_hash({"a": 1}) != stable_hash({"a": 2})
        assert len(stable_hash({})) == 64
