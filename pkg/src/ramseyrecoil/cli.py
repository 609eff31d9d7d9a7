"""Command-line interface.

Subcommands: ``run``, ``sweep-delay``, ``sweep-detuning``, ``spectrum``, ``fit`` and
``validate``. Every model flag overrides the configuration file, which overrides the
quoted reference parameters.

Exit codes: 0 success, 1 fit failure, 2 configuration error, 3 numerical divergence,
4 partial sweep failure, 5 validation failure.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from ramseyrecoil import __app_name__, __version__
from ramseyrecoil.config import RunConfig, load_config, overrides_from_flags
from ramseyrecoil.errors import ConfigError, FitError, SimulationDivergedError, SweepError
from ramseyrecoil.fringe import (
    CHANNELS,
    WORKERS_ENV,
    default_workers,
    fit_fringe,
    fit_fringes,
    sweep_delay,
    sweep_detuning,
)
from ramseyrecoil.graph import CouplingGraph
from ramseyrecoil.io import (
    MANIFEST_NAME,
    dispersion_csv,
    fringe_csv,
    json_text,
    load_state,
    manifest_json,
    read_fringe_csv,
    spectrum_csv,
    spectrum_sidecar,
    write_artifacts,
)
from ramseyrecoil.model import RunManifest
from ramseyrecoil.runner import execute_run, write_run
from ramseyrecoil.spectrum import cloud_spectra, recoil_report
from ramseyrecoil.validate import run_validation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FIT = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_PARTIAL = 4
EXIT_VALIDATION = 5

FRINGE_FILE = "fringe.csv"
FITS_FILE = "fits.json"
DISPERSION_FILE = "dispersion.csv"
REPORT_FILE = "sweep_report.json"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML configuration file.")
    parser.add_argument("--log-level", default="INFO", help="Logging level (default INFO).")
    parser.add_argument(
        "--show-couplings", action="store_true", help="Print the coupling lattice of the mode set first."
    )

    model = parser.add_argument_group("model")
    model.add_argument("--delta", type=float, help="Detuning (1/tau_R).")
    model.add_argument("--gamma", type=float, help="Spontaneous rate gamma.")
    model.add_argument("--v-coeff", type=float, help="Recoil velocity coefficient.")
    model.add_argument("--omega-coeff", type=float, help="Recoil frequency coefficient.")
    model.add_argument("--e0", type=float, help="Pulse amplitude.")
    model.add_argument("--k0L", type=float, help="Dimensionless optical wavenumber.")
    model.add_argument("--max-order", type=int, help="Truncation order M (even).")
    model.add_argument("--dt", type=float, help="RK4 time step.")
    model.add_argument(
        "--drop-spatial-derivatives",
        action="store_const",
        const=True,
        default=None,
        help="Omit the transport terms.",
    )
    model.add_argument("--nx", type=int, help="Spatial grid points.")
    model.add_argument("--stencil", choices=["central2", "upwind1"], help="Spatial stencil.")
    model.add_argument("--dt-pulse", type=float, help="Pulse duration.")
    model.add_argument("--tau", type=float, help="Delay between the pulse starts.")

    run = parser.add_argument_group("run")
    run.add_argument("--record-every", type=int, help="Steps between population records.")
    run.add_argument(
        "--snapshot-every", type=int, help="Steps between full-state snapshots (default: phase ends only)."
    )
    run.add_argument("--output-dir", help="Artifact directory.")
    run.add_argument("--workers", type=int, help=f"Worker processes (else ${WORKERS_ENV}).")
    run.add_argument("--k-max", type=float, help="Half width of the k-window.")
    run.add_argument("--nk", type=int, help="Points of the k-grid.")

    sweep = parser.add_argument_group("sweep")
    sweep.add_argument("--tau-min", type=float)
    sweep.add_argument("--tau-max", type=float)
    sweep.add_argument("--tau-points", type=int)
    sweep.add_argument("--delta-min", type=float)
    sweep.add_argument("--delta-max", type=float)
    sweep.add_argument("--delta-points", type=int)


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser."""
    parser = argparse.ArgumentParser(
        prog=__app_name__, description=__doc__, formatter_class=argparse.RawTextHelpFormatter
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "Run one Ramsey sequence and write its artifacts."),
        ("sweep-delay", "Sweep the delay and fit the fringes."),
        ("sweep-detuning", "Sweep the detuning and build the dispersion table."),
        ("validate", "Run the fast invariant suite."),
    ):
        _add_common(commands.add_parser(name, help=help_text))

    spectrum = commands.add_parser("spectrum", help="Compute cloud spectra of a saved state.")
    _add_common(spectrum)
    spectrum.add_argument("--snapshot", type=Path, required=True, help="State saved as .npz.")

    fit = commands.add_parser("fit", help="Fit the fringes of a fringe CSV.")
    _add_common(fit)
    fit.add_argument("--fringe", type=Path, required=True, help="Fringe CSV.")
    fit.add_argument("--channel", choices=CHANNELS, help="Fit only this channel.")

    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Load the configuration file and apply the command-line overrides."""
    config = load_config(args.config)
    return config.with_overrides(overrides_from_flags(vars(args)))


def resolve_workers(args: argparse.Namespace, config: RunConfig) -> int:
    """Worker count: flag, then environment, then configuration, then CPU count."""
    if args.workers is not None:
        return args.workers
    if os.environ.get(WORKERS_ENV):
        return default_workers()
    return config.run.workers or default_workers()


def _point_manifests(config: RunConfig, key: str, values: Sequence[float], outputs: list[str]) -> dict[str, str]:
    manifests = {}
    for index, value in enumerate(values):
        snapshot = config.snapshot()
        section, _, name = key.partition(".")
        snapshot[section][name] = value
        manifest = RunManifest.create(snapshot, outputs=outputs)
        manifests[f"manifest_{name}_{index:03d}.json"] = manifest_json(manifest)
    return manifests


def _write_with_manifest(config: RunConfig, directory: Path, artifacts: dict[str, str]) -> RunManifest:
    manifest = RunManifest.create(config.snapshot(), outputs=list(artifacts))
    write_artifacts(directory, {**artifacts, MANIFEST_NAME: manifest_json(manifest)})
    return manifest


def cmd_run(config: RunConfig, args: argparse.Namespace) -> int:
    """Run one Ramsey sequence and write trajectory, snapshot, spectra, recoil report and manifest."""
    result = execute_run(config)
    manifest = write_run(result, config)
    record = result.final_populations
    print(f"S_0(tau+dt_pulse) = {record.s_ground[0]!r}")
    for mode, report in result.recoil.items():
        print(f"mode {mode}: delta_k/k0 = {report.delta_k_over_k0!r}, delta_omega/omega = {report.delta_omega_ratio!r}")
    print(f"artifacts: {', '.join(manifest.outputs)} in {config.run.output_dir}")
    return EXIT_OK


def cmd_sweep_delay(config: RunConfig, args: argparse.Namespace) -> int:
    """Sweep the delay at the configured detuning, write the fringe CSV and its fits."""
    params = config.params()
    taus = config.sweep.tau_values
    directory = Path(config.run.output_dir)
    try:
        series = sweep_delay(
            params, params.delta, taus, dt_pulse=config.schedule.dt_pulse, workers=resolve_workers(args, config)
        )
    except SweepError as error:
        report = {"failures": {repr(tau): message for tau, message in error.failures.items()}}
        _write_with_manifest(config, directory, {REPORT_FILE: json_text(report)})
        raise

    fits = fit_fringes(series)
    artifacts = {
        FRINGE_FILE: fringe_csv(series),
        FITS_FILE: json_text({channel: fit.model_dump() for channel, fit in fits.items()}),
    }
    artifacts.update(_point_manifests(config, "schedule.tau", taus, [FRINGE_FILE]))
    _write_with_manifest(config, directory, artifacts)
    for channel, fit in fits.items():
        print(f"{channel}: omega_ratio = {fit.omega_ratio!r} (residual {fit.residual_rms:.3g})")
    return EXIT_OK


def cmd_sweep_detuning(config: RunConfig, args: argparse.Namespace) -> int:
    """Sweep the detuning and write the dispersion table."""
    deltas = config.sweep.delta_values
    table = sweep_detuning(
        config.params(),
        deltas,
        config.sweep.tau_values,
        dt_pulse=config.schedule.dt_pulse,
        workers=resolve_workers(args, config),
        delta_range=config.sweep.delta_range,
        tau_r=config.tau_r,
        k_max=config.spectrum.k_max,
        k_points=config.spectrum.nk,
    )
    artifacts = {DISPERSION_FILE: dispersion_csv(table)}
    artifacts.update(_point_manifests(config, "model.delta", deltas, [DISPERSION_FILE]))
    if table.failures:
        artifacts[REPORT_FILE] = json_text({"failures": {repr(delta): msg for delta, msg in table.failures.items()}})
    _write_with_manifest(config, Path(config.run.output_dir), artifacts)

    if table.failures:
        logger.error("%d of %d detunings failed", len(table.failures), len(table.rows))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_spectrum(config: RunConfig, args: argparse.Namespace) -> int:
    """Compute the spectra and recoil reports of a saved state."""
    state = load_state(args.snapshot)
    modes = [mode for mode in config.spectrum.modes if mode % 2 == 0 and abs(mode) <= state.mode_set.max_order]
    spectra = cloud_spectra(state, modes, config.k_grid())
    if not spectra:
        raise ConfigError("None of the requested modes has a spectrum", ["spectrum.modes"])
    recoil = {mode: recoil_report(spectrum, config.model.k0L) for mode, spectrum in spectra.items() if mode != 0}
    _write_with_manifest(
        config,
        Path(config.run.output_dir),
        {
            "spectrum.csv": spectrum_csv(spectra, config.model.k0L),
            "spectrum.json": json_text(spectrum_sidecar(spectra, recoil)),
        },
    )
    for mode, spectrum in spectra.items():
        print(f"mode {mode}: kappa = {spectrum.kappa!r}, D = {spectrum.variance!r}")
    return EXIT_OK


def cmd_fit(config: RunConfig, args: argparse.Namespace) -> int:
    """Fit the channels of a fringe CSV and print the fits as JSON."""
    series = read_fringe_csv(args.fringe)
    if args.channel:
        fits = {args.channel: fit_fringe(series, args.channel)}
    else:
        fits = fit_fringes(series)
        if not fits:
            raise FitError("No channel could be fitted")
    print(json_text({channel: fit.model_dump() for channel, fit in fits.items()}), end="")
    return EXIT_OK


def cmd_validate(config: RunConfig, args: argparse.Namespace) -> int:
    """Run the invariant suite and print one line per property."""
    report = run_validation(delta=config.model.delta, gamma=config.model.gamma)
    print(report.pretty_string())
    return EXIT_OK if report.passed else EXIT_VALIDATION


COMMANDS = {
    "run": cmd_run,
    "sweep-delay": cmd_sweep_delay,
    "sweep-detuning": cmd_sweep_detuning,
    "spectrum": cmd_spectrum,
    "fit": cmd_fit,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``ramseyrecoil`` command.

    Returns:
        int: The process exit code.

    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config = resolve_config(args)
        if args.show_couplings:
            CouplingGraph(config.params().mode_set).pretty_print()
        return COMMANDS[args.command](config, args)
    except ConfigError as error:
        logger.error("%s", error)
        print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDivergedError as error:
        print(f"numerical divergence: {error}", file=sys.stderr)
        return EXIT_DIVERGED
    except SweepError as error:
        print(f"sweep failed: {error}", file=sys.stderr)
        return EXIT_PARTIAL
    except FitError as error:
        print(f"fit failed: {error}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as error:
        # argument combinations the library rejects after the configuration passed
        logger.error("%s", error)
        print(f"invalid input: {error}", file=sys.stderr)
        return EXIT_CONFIG
