"""Full-size Ramsey runs at the quoted parameters.

These runs take minutes each and are deselected by default; run them with
``pytest -m slow``.
"""

from functools import cache

import numpy as np
import pytest

from ramseyrecoil.dynamics import first_pulse, run_ramsey, step
from ramseyrecoil.fringe import fit_fringe, sweep_delay
from ramseyrecoil.observables import populations
from ramseyrecoil.spectrum import envelope_spectrum, recoil_report
from ramseyrecoil.types.model import GridSpec, ModeSet, PulseSchedule
from ramseyrecoil.units import reference_defaults

pytestmark = pytest.mark.slow

TAUS = np.linspace(3e3, 9e4, 50).tolist()
DT_PULSE = 3e3


@cache
def fringe_ratio(delta: float) -> float:
    """Fitted S_0 fringe frequency over the bare recoil frequency."""
    series = sweep_delay(reference_defaults(), delta, TAUS, dt_pulse=DT_PULSE)
    return fit_fringe(series).omega_ratio


@cache
def mean_shift(delta: float) -> float:
    """Quantum-mean frequency shift of the |+2> cloud after pulse 1."""
    params = reference_defaults(delta=delta)
    return recoil_report(envelope_spectrum(first_pulse(params, DT_PULSE), 2), params.k0L).delta_omega_ratio


class TestPulse:
    """Test the first pulse."""

    def test_depletion(self):
        """The first pulse leaves about 90 % of the atoms in the condensate."""
        state = first_pulse(reference_defaults(delta=0.5), DT_PULSE)
        s0 = populations(state).s_ground[0]
        assert 0.85 <= s0 <= 0.95

    @pytest.mark.parametrize(
        "delta, expected",
        [pytest.param(-0.5, 0.062, id="blue"), pytest.param(0.5, -0.057, id="red")],
    )
    def test_mean_shift(self, delta: float, expected: float):
        """The |+2> cloud carries the quoted frequency shift after pulse 1."""
        params = reference_defaults(delta=delta)
        state = first_pulse(params, DT_PULSE)
        plus = envelope_spectrum(state, 2)
        minus = envelope_spectrum(state, -2)

        assert recoil_report(plus, params.k0L).delta_omega_ratio == pytest.approx(expected, abs=0.010)
        assert minus.kappa == pytest.approx(-plus.kappa, abs=1e-8)


class TestDispersion:
    """Test the detuning dependence of the side-cloud shift."""

    DELTAS = [-12.0, -8.0, -4.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0]

    @pytest.fixture(scope="class")
    def kappas(self) -> dict[float, tuple[float, float]]:
        """Fixture for the envelope shifts of |+2> and |-2> after pulse 1 at each detuning."""
        values = {}
        for delta in self.DELTAS:
            state = first_pulse(reference_defaults(delta=delta), DT_PULSE)
            values[delta] = (envelope_spectrum(state, 2).kappa, envelope_spectrum(state, -2).kappa)
        return values

    def test_single_sign_change(self, kappas: dict[float, tuple[float, float]]):
        """The shift of |+2> changes sign once, between the two detunings closest to 0."""
        plus = np.array([kappas[delta][0] for delta in self.DELTAS])
        flips = np.flatnonzero(np.diff(np.sign(plus)))

        assert flips.tolist() == [self.DELTAS.index(-0.5)]
        assert np.sign(plus[0]) == -np.sign(plus[-1])

    def test_mirror(self, kappas: dict[float, tuple[float, float]]):
        """kappa_-2 mirrors kappa_2 at every detuning."""
        for plus, minus in kappas.values():
            assert minus == pytest.approx(-plus, abs=1e-8)


class TestFringes:
    """Test the fringe frequencies."""

    @pytest.mark.parametrize(
        "delta, expected",
        [pytest.param(-0.5, 1.06, id="blue"), pytest.param(0.5, 0.94, id="red")],
    )
    def test_frequency(self, delta: float, expected: float):
        """The fringe frequency is shifted away from the bare recoil frequency."""
        assert fringe_ratio(delta) == pytest.approx(expected, abs=0.03)

    @pytest.mark.parametrize("delta", [pytest.param(-0.5, id="blue"), pytest.param(0.5, id="red")])
    def test_fringe_matches_mean(self, delta: float):
        """The fringe shift agrees with the quantum-mean shift to 0.01."""
        assert abs((fringe_ratio(delta) - 1.0) - mean_shift(delta)) <= 0.010

    @pytest.mark.parametrize("delta", [pytest.param(-0.5, id="blue"), pytest.param(0.5, id="red")])
    def test_without_transport(self, delta: float):
        """Without the spatial derivatives the fringe sits at the bare frequency."""
        params = reference_defaults(drop_spatial_derivatives=True)
        series = sweep_delay(params, delta, TAUS, dt_pulse=DT_PULSE)
        assert fit_fringe(series).omega_ratio == pytest.approx(1.0, abs=0.01)


class TestConservation:
    """Test conservation at the quoted parameters."""

    def test_norm_without_decay(self):
        """With gamma=0 norm plus outflow stays at 1 over a full run."""
        trajectory = run_ramsey(reference_defaults(gamma=0.0), PulseSchedule(dt_pulse=DT_PULSE, tau=3e4))
        for record in trajectory.populations:
            assert record.balance == pytest.approx(1.0, abs=1e-6)


    def test_dissipation(self):
        """With gamma=5e-2 the norm falls at gamma times the excited population."""
        params = reference_defaults()
        state = first_pulse(params, 1500.0)
        times, kept, excited = [], [], []
        for _ in range(21):
            record = populations(state)
            times.append(state.t)
            kept.append(record.total_norm + record.outflow)
            excited.append(sum(record.p_excited.values()))
            state = step(state, params, lambda _t: params.e0)

        rate = np.gradient(np.array(kept), np.array(times))[1:-1]
        expected = -params.gamma * np.array(excited)[1:-1]
        assert np.min(excited) > 1e-6
        np.testing.assert_allclose(rate, expected, rtol=0.01)


class TestConvergence:
    """Test convergence in the truncation and the step."""

    SCHEDULE = PulseSchedule(dt_pulse=DT_PULSE, tau=1.5e4)

    def _s0(self, **changes) -> float:
        return run_ramsey(reference_defaults(**changes), self.SCHEDULE, record_every=None).measurement.s_ground[0]

    def test_truncation(self):
        """Raising M from 10 to 14 barely changes S_0."""
        assert abs(self._s0(mode_set=ModeSet(max_order=14)) - self._s0()) < 1e-4

    def test_time_step(self):
        """Halving the step barely changes S_0."""
        assert abs(self._s0(dt=0.05) - self._s0(dt=0.1)) < 1e-6

    def test_grid(self):
        """Doubling the grid barely changes S_0."""
        assert abs(self._s0(grid=GridSpec(nx=512)) - self._s0()) < 1e-4
