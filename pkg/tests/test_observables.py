"""Test the population observables."""

import numpy as np
import pytest

from ramseyrecoil.model import FieldState
from ramseyrecoil.observables import mode_norms, populations
from ramseyrecoil.types.model import GridSpec, ModeSet


class TestPopulations:
    """Test populations and mode_norms."""

    def test_initial(self):
        """The initial state has all of its norm in a0."""
        record = populations(FieldState.initial(ModeSet(max_order=2), GridSpec(nx=64)))

        assert record.s_ground[0] == pytest.approx(1.0, abs=1e-14)
        assert record.s_ground[2] == 0.0
        assert set(record.p_excited) == {-3, -1, 1, 3}
        assert record.total_norm == pytest.approx(1.0, abs=1e-14)

    def test_mode_norms(self):
        """Each row is integrated over x."""
        x = np.linspace(0.0, 1.0, 65)
        rows = np.vstack((np.ones(65), np.sqrt(x)))
        np.testing.assert_allclose(mode_norms(rows), [1.0, 0.5], atol=1e-14)

    def test_losses_carried(self):
        """The cumulative losses and the outflow rate are recorded."""
        state = FieldState.initial(ModeSet(max_order=0), GridSpec(nx=16)).model_copy(
            update={"outflow": 0.01, "decay": 0.02, "t": 3.0}
        )
        record = populations(state, outflow_rate=0.005)

        assert record.t == 3.0
        assert record.outflow == 0.01
        assert record.decay == 0.02
        assert record.outflow_rate == 0.005
        assert record.balance == pytest.approx(1.03)

    def test_linear_profile(self):
        """A ground cloud a2 = x holds a third of an atom."""
        mode_set, grid = ModeSet(max_order=2), GridSpec(nx=1025)
        state = FieldState.zeros(mode_set, grid)
        a = state.a.copy()
        a[mode_set.ground_index(2)] = grid.x
        record = populations(state.model_copy(update={"a": a}))

        assert record.s_ground[2] == pytest.approx(1.0 / 3.0, abs=1e-6)
        assert record.s_ground[0] == 0.0

    def test_global_phase(self):
        """A global phase leaves every population unchanged."""
        mode_set = ModeSet(max_order=2)
        rng = np.random.default_rng(11)
        state = FieldState(
            a=rng.normal(size=(3, 32)) + 1j * rng.normal(size=(3, 32)),
            b=rng.normal(size=(4, 32)) + 1j * rng.normal(size=(4, 32)),
            mode_set=mode_set,
        )
        record = populations(state)
        turned = populations(state.with_phase(1.234))

        for mode, value in record.s_ground.items():
            assert turned.s_ground[mode] == pytest.approx(value, rel=1e-13)
        for mode, value in record.p_excited.items():
            assert turned.p_excited[mode] == pytest.approx(value, rel=1e-13)
