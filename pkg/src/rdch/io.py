"""CSV and legacy VTK output. Every file is written whole to a temporary
file in the target directory and renamed into place."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .diagnostics import ConvergenceRow, DiagnosticsRecord, StabilityScanResult
from .fem import FemSpace

SERIES_COLUMNS = DiagnosticsRecord.CSV_COLUMNS


def _fmt(x) -> str:
    # repr round-trips doubles exactly and is stable across runs
    return repr(float(x))


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_series_csv(path, records: Iterable[DiagnosticsRecord]) -> Path:
    return atomic_write_text(path, _csv_text(SERIES_COLUMNS, (r.csv_row() for r in records)))


def read_series_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float).reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def write_snapshot_csv(path, space: FemSpace, n, phi) -> Path:
    x = space.mesh.vertices[:, 0]
    rows = ((_fmt(a), _fmt(b), _fmt(c)) for a, b, c in zip(x, n, phi))
    return atomic_write_text(path, _csv_text(("x", "n", "phi"), rows))


def write_snapshot_vtk(path, space: FemSpace, n, phi, title: str = "rdch snapshot") -> Path:
    """Legacy ASCII VTK unstructured grid of triangles with point data."""
    mesh = space.mesh
    if mesh.dimension != 2:
        raise ValueError("VTK snapshots are written for 2D meshes only")
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    ne = mesh.n_elements
    lines.append(f"CELLS {ne} {4 * ne}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["5"] * ne  # VTK_TRIANGLE
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, values in (("n", n), ("phi", phi)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(v) for v in values]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_snapshot(directory, space: FemSpace, step: int, n, phi) -> Path:
    directory = Path(directory)
    if space.dimension == 1:
        return write_snapshot_csv(directory / f"snap_{step}.csv", space, n, phi)
    return write_snapshot_vtk(directory / f"snap_{step}.vtk", space, n, phi)


def stability_filename(sigma: float) -> str:
    return f"stability_{sigma:g}.csv"


def write_stability_csv(directory, result: StabilityScanResult) -> Path:
    rows = ((_fmt(d), _fmt(r)) for d, r in zip(result.dt, result.rho))
    return atomic_write_text(Path(directory) / stability_filename(result.sigma), _csv_text(("dt", "rho"), rows))


def write_convergence_csv(directory, rows: Iterable[ConvergenceRow]) -> Path:
    body = ((_fmt(r.h), _fmt(r.dt), _fmt(r.diff_to_next)) for r in rows)
    return atomic_write_text(Path(directory) / "convergence.csv", _csv_text(("h", "dt", "diff_to_next"), body))


class SnapshotSink:
    """Run sink writing a snapshot every ``every`` steps (0 disables)."""

    def __init__(self, directory, space: FemSpace, every: int):
        self.directory = Path(directory)
        self.space = space
        self.every = every
        self.written: list[Path] = []

    def __call__(self, state, record) -> None:
        if self.every and state.step % self.every == 0:
            self.written.append(write_snapshot(self.directory, self.space, state.step, state.n, state.phi))
