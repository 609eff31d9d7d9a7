"""Test the envelope momentum analysis."""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ramseyrecoil.errors import StructureError, UndefinedDistributionError
from ramseyrecoil.model import FieldState
from ramseyrecoil.spectrum import (
    DEFAULT_K_MAX,
    DEFAULT_K_POINTS,
    cloud_spectra,
    default_k_grid,
    envelope_spectrum,
    recoil_report,
)
from ramseyrecoil.types.model import GridSpec, ModeSet
from ramseyrecoil.utils import symmetric_grid


def shifted_cloud(q: float, nx: int = 1025, max_order: int = 2) -> FieldState:
    """State whose |+2> and |-2> envelopes carry the shifts +q and -q."""
    mode_set = ModeSet(max_order=max_order)
    state = FieldState.zeros(mode_set, GridSpec(nx=nx))
    x = state.x
    envelope = np.exp(-(((x - 0.5) / 0.1) ** 2))
    a = state.a.copy()
    a[mode_set.ground_index(2)] = envelope * np.exp(1j * q * x)
    a[mode_set.ground_index(-2)] = envelope * np.exp(-1j * q * x)
    return state.model_copy(update={"a": a})


class TestEnvelopeSpectrum:
    """Test envelope_spectrum."""

    @pytest.fixture(scope="class")
    def box(self) -> FieldState:
        """Fixture for the initial box-shaped a0."""
        return FieldState.initial(ModeSet(max_order=0), GridSpec(nx=256))

    def test_normalised(self, box: FieldState):
        """The distribution integrates to one."""
        spectrum = envelope_spectrum(box, 0)
        assert trapezoid(spectrum.w, spectrum.k_grid) == pytest.approx(1.0, abs=1e-10)
        assert spectrum.window == pytest.approx((-DEFAULT_K_MAX, DEFAULT_K_MAX), rel=1e-12)

    def test_static_cloud_centred(self, box: FieldState):
        """A real envelope has no mean shift."""
        assert envelope_spectrum(box, 0).kappa == pytest.approx(0.0, abs=1e-9)

    def test_parseval(self, box: FieldState):
        """Spectral and spatial power agree, better in a wider window."""
        default = envelope_spectrum(box, 0).parseval_error
        doubled = envelope_spectrum(box, 0, default_k_grid(2 * DEFAULT_K_MAX, 2 * DEFAULT_K_POINTS)).parseval_error

        assert default <= 0.02
        assert doubled < default

    def test_shift_theorem(self):
        """A phase ramp exp(iqx) shifts the distribution by q."""
        spectrum = envelope_spectrum(shifted_cloud(7.0), 2, symmetric_grid(512 * np.pi, 8192))

        assert spectrum.kappa == pytest.approx(7.0, rel=1e-3)
        assert spectrum.std == pytest.approx(1.0 / 0.1, rel=1e-2)

    def test_odd_mode(self, box: FieldState):
        """Excited modes have no spectrum."""
        with pytest.raises(StructureError):
            envelope_spectrum(box, 1)

    def test_asymmetric_grid(self, box: FieldState):
        """The k-grid must be symmetric about zero."""
        with pytest.raises(StructureError):
            envelope_spectrum(box, 0, np.linspace(-10.0, 20.0, 101))

    def test_empty_mode(self):
        """An all-zero amplitude has no distribution."""
        state = FieldState.initial(ModeSet(max_order=2), GridSpec(nx=64))
        with pytest.raises(UndefinedDistributionError):
            envelope_spectrum(state, 2)


class TestRecoilReport:
    """Test recoil_report and cloud_spectra."""

    @pytest.fixture(scope="class")
    def spectra(self):
        """Fixture for the spectra of two mirrored clouds."""
        state = shifted_cloud(3.0, nx=257)
        return cloud_spectra(state, [2, -2], default_k_grid(64 * np.pi, 2049))

    def test_mirrored_shifts(self, spectra):
        """The |-2> cloud mirrors the |+2> cloud."""
        assert spectra[-2].kappa == pytest.approx(-spectra[2].kappa, abs=1e-8)

        plus = recoil_report(spectra[2], 100.0)
        minus = recoil_report(spectra[-2], 100.0)
        assert plus.delta_k_over_k0 == pytest.approx(0.03, rel=1e-3)
        assert minus.delta_k_over_k0 == pytest.approx(plus.delta_k_over_k0, abs=1e-10)

    def test_report_identities(self, spectra):
        """For |j|=2 the frequency shift equals the momentum shift."""
        report = recoil_report(spectra[2], 100.0)

        assert report.delta_omega_ratio == pytest.approx(report.delta_k_over_k0)
        assert report.refraction_index_minus_1 == pytest.approx(report.delta_k_over_k0 / 2.0)
        assert report.std_over_k0 == pytest.approx(spectra[2].std / 100.0)

    def test_static_cloud(self):
        """The j=0 cloud has no recoil report."""
        spectrum = envelope_spectrum(FieldState.initial(ModeSet(max_order=0), GridSpec(nx=64)), 0)
        with pytest.raises(ValueError):
            recoil_report(spectrum, 100.0)

    def test_cloud_spectra_skips_empty(self):
        """Empty clouds are left out."""
        state = FieldState.initial(ModeSet(max_order=2), GridSpec(nx=64))
        spectra = cloud_spectra(state, [0, 2, -2], default_k_grid(32 * np.pi, 513))
        assert list(spectra) == [0]
