"""Artifact formats and writers.

Every text artifact starts with a ``# schema=1 manifest=<file>`` comment naming the
manifest of the run that produced it. Floats are written with ``repr`` so identical
runs give byte-identical files.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional

import anyio
import numpy as np
from anyio import open_file

from ramseyrecoil.fields import compute_fields
from ramseyrecoil.model import (
    SCHEMA_VERSION,
    DispersionTable,
    FieldState,
    FringeSeries,
    MomentumSpectrum,
    RecoilReport,
    RunManifest,
    Trajectory,
)
from ramseyrecoil.types.mode import ModeIndex
from ramseyrecoil.types.model import ModeSet

logger = logging.getLogger(__name__)

StrPath = str | Path

MANIFEST_NAME = "manifest.json"

DISPERSION_COLUMNS = (
    "delta",
    "omega_ratio",
    "fit_rms",
    "kappa2_over_k0",
    "std2_over_k0",
    "delta_omega_ratio_mean",
    "delta_omega_ratio_fringe",
    "kappa_minus2_over_k0",
)


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _by_order(modes: Iterable[ModeIndex]) -> list[ModeIndex]:
    """Order modes as 0, 2, −2, 4, −4, … (or 1, −1, 3, −3, …)."""
    return sorted(modes, key=lambda mode: (abs(mode), -mode))


def header(manifest_name: str, **meta: Any) -> str:
    """Build the leading comment line of a text artifact."""
    extra = "".join(
        f" {key}={value!r}" if isinstance(value, float) else f" {key}={value}" for key, value in meta.items()
    )
    return f"# schema={SCHEMA_VERSION} manifest={manifest_name}{extra}\n"


def parse_header(line: str) -> dict[str, str]:
    """Parse the ``key=value`` pairs of an artifact's leading comment."""
    if not line.startswith("#"):
        raise ValueError("Artifact has no header comment")
    pairs = (item.partition("=") for item in line.lstrip("#").split())
    return {key: value for key, _, value in pairs}


def _table(head: str, columns: Iterable[str], rows: Iterable[Iterable[str]]) -> str:
    buffer = io.StringIO()
    buffer.write(head)
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def trajectory_csv(trajectory: Trajectory, manifest_name: str = MANIFEST_NAME, tau_r: Optional[float] = None) -> str:
    """Render the population records of a run.

    Columns are ``t`` (plus ``t_seconds`` when τ_R is known), ``S_j`` of the ground
    clouds, ``P_j`` of the excited ones, the total norm ``N`` and ``outflow_rate``.
    """
    mode_set = trajectory.params.mode_set
    ground = _by_order(mode_set.ground_modes)
    excited = _by_order(mode_set.excited_modes)

    columns = ["t"] + (["t_seconds"] if tau_r is not None else [])
    columns += [f"S_{mode}" for mode in ground] + [f"P_{mode}" for mode in excited] + ["N", "outflow_rate"]

    rows = []
    for record in trajectory.populations:
        row = [_fmt(record.t)] + ([_fmt(record.t * tau_r)] if tau_r is not None else [])
        row += [_fmt(record.s_ground[mode]) for mode in ground]
        row += [_fmt(record.p_excited[mode]) for mode in excited]
        row += [_fmt(record.total_norm), _fmt(record.outflow_rate)]
        rows.append(row)
    return _table(header(manifest_name), columns, rows)


def spectrum_csv(
    spectra: dict[ModeIndex, MomentumSpectrum], k0L: float, manifest_name: str = MANIFEST_NAME  # noqa: N803
) -> str:
    """Render spectra sharing one k-grid as columns ``k, k_over_k0, w_<j>…``.

    Raises:
        ValueError: If there are no spectra or their k-grids differ.

    """
    if not spectra:
        raise ValueError("No spectra to write")
    k_grid = next(iter(spectra.values())).k_grid
    if any(not np.array_equal(spectrum.k_grid, k_grid) for spectrum in spectra.values()):
        raise ValueError("Spectra must share one k-grid")

    modes = list(spectra)
    columns = ["k", "k_over_k0"] + [f"w_{mode}" for mode in modes]
    rows = (
        [_fmt(k), _fmt(k / k0L)] + [_fmt(spectra[mode].w[i]) for mode in modes]
        for i, k in enumerate(k_grid)
    )
    return _table(header(manifest_name), columns, rows)


def spectrum_sidecar(
    spectra: dict[ModeIndex, MomentumSpectrum],
    recoil: Optional[dict[ModeIndex, RecoilReport]] = None,
    manifest_name: str = MANIFEST_NAME,
) -> dict[str, Any]:
    """Moments, window and recoil reports of a set of spectra."""
    recoil = recoil or {}
    return {
        "schema": SCHEMA_VERSION,
        "manifest": manifest_name,
        "modes": {
            str(mode): {
                "kappa": spectrum.kappa,
                "variance": spectrum.variance,
                "window": list(spectrum.window),
                "points": int(spectrum.k_grid.shape[0]),
                "spectral_power": spectrum.spectral_power,
                "spatial_power": spectrum.spatial_power,
                "recoil": recoil[mode].model_dump() if mode in recoil else None,
            }
            for mode, spectrum in spectra.items()
        },
    }


def fields_csv(state: FieldState, e0_now: float, manifest_name: str = MANIFEST_NAME) -> str:
    """Render E⁺ and E⁻ of a state as ``x, re_e_plus, im_e_plus, re_e_minus, im_e_minus``."""
    pair = compute_fields(state, e0_now)
    rows = (
        [_fmt(x), _fmt(ep.real), _fmt(ep.imag), _fmt(em.real), _fmt(em.imag)]
        for x, ep, em in zip(state.x, pair.e_plus, pair.e_minus)
    )
    return _table(
        header(manifest_name, t=float(state.t)),
        ["x", "re_e_plus", "im_e_plus", "re_e_minus", "im_e_minus"],
        rows,
    )


def fringe_csv(series: FringeSeries, manifest_name: str = MANIFEST_NAME) -> str:
    """Render a fringe series as ``tau, s0, s2, s_minus2``."""
    rows = (
        [_fmt(tau), _fmt(s0), _fmt(s2), _fmt(sm2)]
        for tau, s0, s2, sm2 in zip(series.tau_values, series.s0, series.s2, series.s_minus2)
    )
    return _table(
        header(manifest_name, delta=float(series.delta), omega_coeff=float(series.omega_coeff)),
        ["tau", "s0", "s2", "s_minus2"],
        rows,
    )


def parse_fringe_csv(text: str) -> FringeSeries:
    """Read a fringe series written by :func:`fringe_csv`."""
    first, _, body = text.partition("\n")
    meta = parse_header(first)
    reader = csv.DictReader(io.StringIO(body))
    rows = list(reader)
    return FringeSeries(
        delta=float(meta.get("delta", "nan")),
        omega_coeff=float(meta.get("omega_coeff", "5e-05")),
        tau_values=[float(row["tau"]) for row in rows],
        s0=[float(row["s0"]) for row in rows],
        s2=[float(row["s2"]) for row in rows],
        s_minus2=[float(row["s_minus2"]) for row in rows],
    )


def dispersion_csv(table: DispersionTable, manifest_name: str = MANIFEST_NAME) -> str:
    """Render a dispersion table; physical-unit columns appear when τ_R is known."""
    columns = list(DISPERSION_COLUMNS)
    if table.tau_r is not None:
        columns += ["delta_mhz", "omega_rec_hz"]
    columns.append("error")

    rows = (
        [_fmt(getattr(row, name)) for name in columns[:-1]] + [row.error or ""]
        for row in table.rows
    )
    return _table(header(manifest_name), columns, rows)


def save_state(path: StrPath, state: FieldState) -> Path:
    """Save a state as ``.npz`` with arrays ``x, ground_modes, excited_modes, a, b``."""
    path = Path(path)
    np.savez(
        path,
        schema=SCHEMA_VERSION,
        t=state.t,
        outflow=state.outflow,
        decay=state.decay,
        x=state.x,
        ground_modes=np.array(state.mode_set.ground_modes),
        excited_modes=np.array(state.mode_set.excited_modes),
        a=state.a,
        b=state.b,
    )
    return path


def load_state(path: StrPath) -> FieldState:
    """Load a state saved by :func:`save_state`.

    Raises:
        ValueError: If the file has another schema.

    """
    with np.load(path) as data:
        if int(data["schema"]) != SCHEMA_VERSION:
            raise ValueError(f"Unsupported snapshot schema {int(data['schema'])}")
        return FieldState(
            t=float(data["t"]),
            a=data["a"],
            b=data["b"],
            mode_set=ModeSet(max_order=int(np.max(data["ground_modes"]))),
            outflow=float(data["outflow"]),
            decay=float(data["decay"]),
        )


def manifest_json(manifest: RunManifest) -> str:
    """Render a manifest."""
    return manifest.model_dump_json(by_alias=True, indent=2) + "\n"


def json_text(payload: Any) -> str:
    """Render a JSON report with sorted keys."""
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


async def awrite_artifacts(directory: StrPath, artifacts: dict[str, str]) -> list[Path]:
    """Asynchronously write text artifacts into a directory.

    Args:
        directory (StrPath): Output directory, created if missing.
        artifacts (dict[str, str]): File names mapped to their contents.

    Returns:
        list[Path]: The written paths in the order given.

    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    async def write(path: Path, text: str) -> None:
        async with await open_file(path, "w", encoding="utf-8", newline="") as f:
            await f.write(text)
        logger.debug("Wrote %s", path)

    paths = [directory / name for name in artifacts]
    async with anyio.create_task_group() as tg:
        for path, text in zip(paths, artifacts.values()):
            tg.start_soon(write, path, text)
    return paths


def write_artifacts(directory: StrPath, artifacts: dict[str, str]) -> list[Path]:
    """Write text artifacts into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in artifacts.items():
        path = directory / name
        with path.open("w", encoding="utf-8", newline="") as f:
            f.write(text)
        paths.append(path)
    return paths


def read_fringe_csv(path: StrPath) -> FringeSeries:
    """Read a fringe CSV."""
    return parse_fringe_csv(Path(path).read_text(encoding="utf-8"))
