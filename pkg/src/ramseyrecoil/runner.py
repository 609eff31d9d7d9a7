"""Single-run orchestration and persistence."""

import logging
from functools import partial
from pathlib import Path
from typing import Optional

import anyio

from ramseyrecoil.config import RunConfig
from ramseyrecoil.dynamics import run_ramsey
from ramseyrecoil.io import (
    MANIFEST_NAME,
    awrite_artifacts,
    fields_csv,
    json_text,
    manifest_json,
    save_state,
    spectrum_csv,
    spectrum_sidecar,
    trajectory_csv,
)
from ramseyrecoil.model import SCHEMA_VERSION, RunManifest, RunResult
from ramseyrecoil.spectrum import cloud_spectra, recoil_report

logger = logging.getLogger(__name__)

StrPath = str | Path

TRAJECTORY_FILE = "trajectory.csv"
SNAPSHOT_FILE = "final_state.npz"
SPECTRUM_FILE = "spectrum.csv"
SPECTRUM_SIDECAR_FILE = "spectrum.json"
RECOIL_FILE = "recoil.json"
FIELDS_FILE = "fields.csv"
STATE_FILE = "state_{label}.npz"
"""Intermediate snapshots, written when ``[run] snapshot_every`` is set."""


def execute_run(config: RunConfig) -> RunResult:
    """Run one Ramsey sequence and analyse the final state.

    Spectra are computed for the ``[spectrum] modes`` present in the mode set, and a
    recoil report for every moving one.
    """
    params = config.params()
    trajectory = run_ramsey(
        params,
        config.pulse_schedule(),
        record_every=config.run.record_every,
        snapshot_every=config.run.snapshot_every,
    )

    final = trajectory.final
    modes = [mode for mode in config.spectrum.modes if mode % 2 == 0 and abs(mode) <= params.mode_set.max_order]
    spectra = cloud_spectra(final, modes, config.k_grid())
    recoil = {mode: recoil_report(spectrum, params.k0L) for mode, spectrum in spectra.items() if mode != 0}
    return RunResult(trajectory=trajectory, spectra=spectra, recoil=recoil)


async def awrite_run(result: RunResult, config: RunConfig, output_dir: Optional[StrPath] = None) -> RunManifest:
    """Asynchronously write every artifact of a run and its manifest.

    Args:
        result (RunResult): The run.
        config (RunConfig): The configuration it was produced from.
        output_dir (Optional[StrPath], optional): Target directory. Defaults to
            ``config.run.output_dir``.

    Returns:
        RunManifest: The manifest, listing the written files.

    """
    directory = Path(output_dir or config.run.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    params = result.trajectory.params
    final = result.trajectory.snapshots[-1]

    artifacts = {
        TRAJECTORY_FILE: trajectory_csv(result.trajectory, MANIFEST_NAME, tau_r=config.tau_r),
        FIELDS_FILE: fields_csv(final.state, final.e0_now, MANIFEST_NAME),
    }
    if result.spectra:
        artifacts[SPECTRUM_FILE] = spectrum_csv(result.spectra, params.k0L, MANIFEST_NAME)
        artifacts[SPECTRUM_SIDECAR_FILE] = json_text(spectrum_sidecar(result.spectra, result.recoil, MANIFEST_NAME))
    artifacts[RECOIL_FILE] = json_text(
        {
            "schema": SCHEMA_VERSION,
            "manifest": MANIFEST_NAME,
            "reports": {str(mode): report.model_dump() for mode, report in result.recoil.items()},
        }
    )

    await awrite_artifacts(directory, artifacts)
    save_state(directory / SNAPSHOT_FILE, final.state)
    states = []
    if config.run.snapshot_every is not None:
        for snap in result.trajectory.snapshots[:-1]:
            name = STATE_FILE.format(label=snap.label)
            save_state(directory / name, snap.state)
            states.append(name)

    manifest = RunManifest.create(config.snapshot(), outputs=[*artifacts, SNAPSHOT_FILE, *states])
    await awrite_artifacts(directory, {MANIFEST_NAME: manifest_json(manifest)})
    logger.info("Wrote %d artifacts to %s", len(manifest.outputs) + 1, directory)
    return manifest


def write_run(result: RunResult, config: RunConfig, output_dir: Optional[StrPath] = None) -> RunManifest:
    """Write every artifact of a run and its manifest; see :func:`awrite_run`."""
    return anyio.run(partial(awrite_run, result, config, output_dir))
