"""Delay and detuning sweeps and fringe fitting.

A fringe is S(τ + δt) over the delay τ. Its frequency is the recoil frequency ω_rec,
extracted by fitting ``offset + amplitude·cos(ω·τ + phase)`` after a Fourier
initialisation. Sweep points are independent Ramsey runs and execute in worker
processes through :mod:`anyio`.
"""

import logging
import math
import os
from functools import partial
from typing import Any, Iterable, Optional, Sequence

import anyio
import numpy as np
from anyio import CapacityLimiter, to_process
from anyio.lowlevel import checkpoint
from scipy.optimize import least_squares

from ramseyrecoil.dynamics import first_pulse, run_ramsey
from ramseyrecoil.errors import ConfigError, FitError, RamseyRecoilError, SweepError
from ramseyrecoil.model import (
    DispersionRow,
    DispersionTable,
    FringeComparison,
    FringeFit,
    FringeSeries,
    PopulationRecord,
    RecoilReport,
)
from ramseyrecoil.spectrum import DEFAULT_K_MAX, DEFAULT_K_POINTS, default_k_grid, envelope_spectrum, recoil_report
from ramseyrecoil.types.mode import Channel
from ramseyrecoil.types.model import DimensionlessParams, PulseSchedule
from ramseyrecoil.units import detuning_mhz, frequency_hz
from ramseyrecoil.utils import wrap_phase

logger = logging.getLogger(__name__)

CHANNELS: tuple[Channel, ...] = ("s0", "s2", "s_minus2")
WORKERS_ENV = "RAMSEYRECOIL_WORKERS"
DELTA_RANGE = (-12.0, 12.0)

MIN_SAMPLES = 12
MIN_PERIODS = 1.5
RESIDUAL_WARNING = 0.05
_PADDING = 16
_MAX_NFEV = 200


def default_workers() -> int:
    """Get the worker count from ``RAMSEYRECOIL_WORKERS``, else the CPU count.

    Raises:
        ConfigError: If the environment variable is not a positive integer.

    """
    value = os.environ.get(WORKERS_ENV)
    if value:
        try:
            workers = int(value)
        except ValueError as error:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {value!r}", [WORKERS_ENV]) from error
        if workers < 1:
            raise ConfigError(f"{WORKERS_ENV} must be positive, got {workers}", [WORKERS_ENV])
        return workers
    return os.cpu_count() or 1


def _measure_point(params: DimensionlessParams, tau: float, dt_pulse: float) -> PopulationRecord:
    """Run one Ramsey sequence and return the populations at τ + δt."""
    schedule = PulseSchedule(dt_pulse=dt_pulse, tau=tau)
    return run_ramsey(params, schedule, record_every=None).measurement


def _recoil_point(
    params: DimensionlessParams, dt_pulse: float, k_max: float, k_points: int
) -> tuple[RecoilReport, RecoilReport]:
    """Get the recoil reports of the |+2⟩ and |−2⟩ clouds right after pulse 1."""
    state = first_pulse(params, dt_pulse)
    k_grid = default_k_grid(k_max, k_points)
    return (
        recoil_report(envelope_spectrum(state, 2, k_grid), params.k0L),
        recoil_report(envelope_spectrum(state, -2, k_grid), params.k0L),
    )


async def _run_jobs(
    jobs: dict[Any, tuple[Any, ...]],
    workers: int,
    *,
    stop_on_error: bool,
) -> tuple[dict[Any, Any], dict[Any, str]]:
    """Run independent jobs, in worker processes when ``workers > 1``.

    Each job is ``(function, *args)``. Failures are collected instead of raised so
    that a failing point never tears down the task group; with ``stop_on_error`` the
    first failure cancels the jobs that have not finished.
    """
    results: dict[Any, Any] = {}
    failures: dict[Any, str] = {}
    limiter = CapacityLimiter(max(1, workers))

    async with anyio.create_task_group() as tg:

        async def run_one(key: Any, function: Any, *args: Any) -> None:
            await checkpoint()
            try:
                if workers <= 1:
                    result = function(*args)
                else:
                    result = await to_process.run_sync(function, *args, limiter=limiter)
            except RamseyRecoilError as error:
                failures[key] = str(error)
                logger.warning("Sweep point %s failed: %s", key, error)
                if stop_on_error:
                    tg.cancel_scope.cancel()
                return
            results[key] = result
            logger.info("Sweep point %s done (%d/%d)", key, len(results), len(jobs))

        for key, (function, *args) in jobs.items():
            tg.start_soon(run_one, key, function, *args)

    return results, failures


def _sorted_taus(tau_list: Iterable[float], dt_pulse: float) -> list[float]:
    taus = sorted({float(tau) for tau in tau_list})
    if not taus:
        raise ValueError("tau_list is empty")
    for tau in taus:
        # validates tau >= dt_pulse
        PulseSchedule(dt_pulse=dt_pulse, tau=tau)
    return taus


async def asweep_delay(
    params: DimensionlessParams,
    delta: float,
    tau_list: Sequence[float],
    *,
    dt_pulse: float = 3e3,
    workers: Optional[int] = None,
) -> FringeSeries:
    """Asynchronously sweep the delay between the pulses at one detuning.

    Args:
        params (DimensionlessParams): Model parameters; ``delta`` replaces their detuning.
        delta (float): Detuning of the sweep.
        tau_list (Sequence[float]): Delays, each at least ``dt_pulse``.
        dt_pulse (float, optional): Pulse duration. Defaults to 3e3.
        workers (Optional[int], optional): Worker processes. Defaults to
            :func:`default_workers`; 1 runs every point in this process.

    Returns:
        FringeSeries: Populations at τ + δt ordered by τ.

    Raises:
        SweepError: If any run diverges; ``failures`` names the offending τ.

    """
    point_params = params.evolve(delta=delta)
    taus = _sorted_taus(tau_list, dt_pulse)
    workers = default_workers() if workers is None else workers
    logger.info("Delay sweep: delta=%.4g, %d delays, %d workers", delta, len(taus), workers)

    jobs = {tau: (_measure_point, point_params, tau, dt_pulse) for tau in taus}
    results, failures = await _run_jobs(jobs, workers, stop_on_error=True)
    if failures:
        raise SweepError(
            f"Delay sweep at delta={delta} aborted at tau={', '.join(f'{tau:g}' for tau in failures)}",
            failures,
            results,
        )
    return _series(delta, params.omega_coeff, taus, [results[tau] for tau in taus])


def sweep_delay(
    params: DimensionlessParams,
    delta: float,
    tau_list: Sequence[float],
    *,
    dt_pulse: float = 3e3,
    workers: Optional[int] = None,
) -> FringeSeries:
    """Sweep the delay between the pulses; see :func:`asweep_delay`."""
    return anyio.run(partial(asweep_delay, params, delta, tau_list, dt_pulse=dt_pulse, workers=workers))


def _series(
    delta: float, omega_coeff: float, taus: list[float], records: list[PopulationRecord]
) -> FringeSeries:
    return FringeSeries(
        delta=delta,
        omega_coeff=omega_coeff,
        tau_values=taus,
        s0=[record.s_ground[0] for record in records],
        s2=[record.s_ground.get(2, 0.0) for record in records],
        s_minus2=[record.s_ground.get(-2, 0.0) for record in records],
    )


def _fourier_guess(s: np.ndarray, y: np.ndarray) -> float:
    """Angular frequency (per unit s) of the dominant peak of the detrended series."""
    uniform = np.linspace(0.0, 1.0, s.shape[0])
    resampled = np.interp(uniform, s, y)
    trend = np.polyval(np.polyfit(uniform, resampled, 1), uniform)
    spectrum = np.abs(np.fft.rfft(resampled - trend, n=_PADDING * s.shape[0]))
    frequencies = np.fft.rfftfreq(_PADDING * s.shape[0], d=uniform[1] - uniform[0])
    peak = 1 + int(np.argmax(spectrum[1:]))
    return 2.0 * math.pi * float(frequencies[peak])


def _linear_guess(s: np.ndarray, y: np.ndarray, omega: float) -> tuple[float, float, float]:
    """Offset, amplitude and phase of the best cosine at a fixed frequency."""
    design = np.column_stack((np.ones_like(s), np.cos(omega * s), np.sin(omega * s)))
    (offset, cos_coeff, sin_coeff), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(offset), float(math.hypot(cos_coeff, sin_coeff)), float(math.atan2(-sin_coeff, cos_coeff))


def fit_fringe(series: FringeSeries, channel: Channel = "s0") -> FringeFit:
    """Fit a single cosine plus offset to one channel of a fringe series.

    The delays are mapped onto s ∈ [0, 1]. The frequency is initialised from the
    dominant peak of the zero-padded FFT of the linearly detrended series, the
    amplitude, phase and offset by linear least squares at that frequency, and all four
    are then refined with Levenberg–Marquardt (relative step tolerance 1e-10, at most
    200 evaluations).

    Args:
        series (FringeSeries): The fringe.
        channel (Channel, optional): ``s0``, ``s2`` or ``s_minus2``. Defaults to ``s0``.

    Returns:
        FringeFit: The fit, with omega_ratio = ω/ω₂ and ω₂ = 4·omega_coeff.

    Raises:
        FitError: If there are too few samples or periods, the series is flat, the
            refinement does not converge or the amplitude is below the residual.

    """
    tau = series.tau_values
    y = series.channel(channel)
    if tau.shape[0] < MIN_SAMPLES:
        raise FitError(f"Need at least {MIN_SAMPLES} samples, got {tau.shape[0]}")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise FitError(f"Channel {channel} is flat; no fringe to fit")

    origin = float(tau[0])
    span = float(tau[-1] - tau[0])
    s = (tau - origin) / span

    omega_s = _fourier_guess(s, y)
    offset, amplitude, phase_s = _linear_guess(s, y, omega_s)
    initial = {
        "omega": omega_s / span,
        "amplitude": amplitude,
        "phase": wrap_phase(phase_s - omega_s * origin / span),
        "offset": offset,
    }
    if omega_s / (2.0 * math.pi) < MIN_PERIODS:
        raise FitError(
            f"Fringe spans {omega_s / (2.0 * math.pi):.2f} periods, need at least {MIN_PERIODS}", initial
        )

    def residual(theta: np.ndarray) -> np.ndarray:
        w, a, p, c = theta
        return c + a * np.cos(w * s + p) - y

    def jacobian(theta: np.ndarray) -> np.ndarray:
        w, a, p, _ = theta
        sine = np.sin(w * s + p)
        return np.column_stack((-a * s * sine, np.cos(w * s + p), -a * sine, np.ones_like(s)))

    result = least_squares(
        residual,
        np.array([omega_s, amplitude, phase_s, offset]),
        jac=jacobian,
        method="lm",
        xtol=1e-10,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=_MAX_NFEV,
    )
    if result.status <= 0:
        raise FitError(f"Fringe fit did not converge: {result.message}", initial)

    omega_s, amplitude, phase_s, offset = (float(value) for value in result.x)
    if amplitude < 0:
        amplitude, phase_s = -amplitude, phase_s + math.pi
    residual_rms = float(np.sqrt(np.mean(result.fun**2)))
    omega = omega_s / span

    if omega <= 0 or amplitude <= residual_rms:
        raise FitError(
            f"No fringe above the noise floor (amplitude {amplitude:.3g}, residual {residual_rms:.3g})", initial
        )
    if omega * span / (2.0 * math.pi) < MIN_PERIODS:
        raise FitError(f"Fitted fringe spans fewer than {MIN_PERIODS} periods", initial)

    fit = FringeFit(
        channel=channel,
        omega_rec=omega,
        amplitude=amplitude,
        phase=wrap_phase(phase_s - omega * origin),
        offset=offset,
        residual_rms=residual_rms,
        omega_2=series.omega_2,
        n_samples=int(tau.shape[0]),
        nfev=int(result.nfev),
    )
    if fit.relative_residual > RESIDUAL_WARNING:
        logger.warning(
            "Fringe fit of %s at delta=%.4g: residual %.1f%% of the amplitude",
            channel,
            series.delta,
            100.0 * fit.relative_residual,
        )
    return fit


def fit_fringes(series: FringeSeries, channels: Sequence[Channel] = CHANNELS) -> dict[Channel, FringeFit]:
    """Fit several channels of a series, leaving out the ones that cannot be fitted."""
    fits = {}
    for channel in channels:
        try:
            fits[channel] = fit_fringe(series, channel)
        except FitError as error:
            logger.warning("No fit for %s at delta=%.4g: %s", channel, series.delta, error)
    return fits


def compare_fringes(first: FringeFit, second: FringeFit) -> FringeComparison:
    """Compare the frequency and phase of two fringes, e.g. at Δ and −Δ."""
    return FringeComparison(first=first, second=second)


async def asweep_detuning(
    params: DimensionlessParams,
    delta_list: Sequence[float],
    tau_list: Sequence[float],
    *,
    dt_pulse: float = 3e3,
    workers: Optional[int] = None,
    delta_range: tuple[float, float] = DELTA_RANGE,
    tau_r: Optional[float] = None,
    k_max: float = DEFAULT_K_MAX,
    k_points: int = DEFAULT_K_POINTS,
) -> DispersionTable:
    """Asynchronously build the dispersion table over a list of detunings.

    Every detuning gets a delay sweep with a fringe fit of S₀ and the recoil report of
    the |±2⟩ clouds right after pulse 1. All runs share one worker pool.

    Args:
        params (DimensionlessParams): Model parameters; each row replaces the detuning.
        delta_list (Sequence[float]): Detunings.
        tau_list (Sequence[float]): Delays of each fringe.
        dt_pulse (float, optional): Pulse duration. Defaults to 3e3.
        workers (Optional[int], optional): Worker processes. Defaults to
            :func:`default_workers`.
        delta_range (tuple[float, float], optional): Allowed detunings. Defaults to [−12, 12].
        tau_r (Optional[float], optional): τ_R in seconds; adds MHz and Hz columns.
        k_max (float, optional): Half width of the k-window. Defaults to 64π.
        k_points (int, optional): Points of the k-grid. Defaults to 4096.

    Returns:
        DispersionTable: One row per detuning in ascending order; failed points are gaps.

    Raises:
        ValueError: If a detuning is out of range or the mode set has no |±2⟩ clouds.

    """
    deltas = sorted({float(delta) for delta in delta_list})
    low, high = delta_range
    outside = [delta for delta in deltas if not low <= delta <= high]
    if outside:
        raise ValueError(f"Detunings {outside} outside the configured range [{low}, {high}]")
    if params.mode_set.max_order < 2:
        raise ValueError("A detuning sweep needs the |±2> clouds (max_order >= 2)")
    taus = _sorted_taus(tau_list, dt_pulse)
    workers = default_workers() if workers is None else workers
    logger.info("Detuning sweep: %d detunings x %d delays, %d workers", len(deltas), len(taus), workers)

    point_params = {delta: params.evolve(delta=delta) for delta in deltas}
    jobs: dict[Any, tuple[Any, ...]] = {}
    for delta in deltas:
        jobs[("recoil", delta)] = (_recoil_point, point_params[delta], dt_pulse, k_max, k_points)
        for tau in taus:
            jobs[("fringe", delta, tau)] = (_measure_point, point_params[delta], tau, dt_pulse)

    results, failures = await _run_jobs(jobs, workers, stop_on_error=False)
    rows = [
        _dispersion_row(delta, taus, params.omega_coeff, results, failures, tau_r)
        for delta in deltas
    ]
    return DispersionTable(rows=rows, tau_r=tau_r)


def sweep_detuning(
    params: DimensionlessParams,
    delta_list: Sequence[float],
    tau_list: Sequence[float],
    **kwargs: Any,
) -> DispersionTable:
    """Build the dispersion table over a list of detunings; see :func:`asweep_detuning`."""
    return anyio.run(partial(asweep_detuning, params, delta_list, tau_list, **kwargs))


def _dispersion_row(
    delta: float,
    taus: list[float],
    omega_coeff: float,
    results: dict[Any, Any],
    failures: dict[Any, str],
    tau_r: Optional[float],
) -> DispersionRow:
    values: dict[str, Any] = {"delta": delta}
    errors = []
    if tau_r is not None:
        values["delta_mhz"] = detuning_mhz(delta, tau_r)

    recoil_key = ("recoil", delta)
    if recoil_key in results:
        plus, minus = results[recoil_key]
        values.update(
            kappa2_over_k0=plus.kappa / plus.k0L,
            kappa_minus2_over_k0=minus.kappa / minus.k0L,
            std2_over_k0=plus.std_over_k0,
            delta_omega_ratio_mean=plus.delta_omega_ratio,
        )
    else:
        errors.append(f"recoil: {failures.get(recoil_key, 'not run')}")

    failed_taus = [tau for tau in taus if ("fringe", delta, tau) in failures]
    if failed_taus:
        errors.append(f"fringe: runs failed at tau={', '.join(f'{tau:g}' for tau in failed_taus)}")
    else:
        series = _series(delta, omega_coeff, taus, [results[("fringe", delta, tau)] for tau in taus])
        try:
            fit = fit_fringe(series, "s0")
        except FitError as error:
            errors.append(f"fit: {error}")
        else:
            values.update(
                omega_ratio=fit.omega_ratio,
                fit_rms=fit.residual_rms,
                delta_omega_ratio_fringe=fit.omega_ratio - 1.0,
            )
            if tau_r is not None:
                values["omega_rec_hz"] = frequency_hz(fit.omega_rec, tau_r)

    if errors:
        values["error"] = "; ".join(errors)
        logger.warning("Detuning %.4g recorded as a gap: %s", delta, values["error"])
    return DispersionRow(**values)
