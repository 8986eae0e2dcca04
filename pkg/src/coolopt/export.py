"""Field snapshots and their file formats.

Snapshots hold nodal fields (velocity magnitude, temperatures, pressure) and
gamma averaged per element.  Two formats are written: legacy ASCII VTK on a
structured grid, and one CSV per field with columns ``x, y, value``.  Every
number goes through one fixed format so identical runs give identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArtifactError
from .mesh import StructuredMesh

FMT = "{:.10e}"
NODAL_FIELDS = ("speed", "Tt", "Tb", "p")


@dataclass
class FieldSnapshot:
    tag: str  # e.g. "A_start", "B_end"
    stage: str
    iteration: int
    nodal: dict[str, np.ndarray]
    gamma: np.ndarray  # per element (mean over Gauss points)
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_solution(cls, tag: str, stage: str, iteration: int, mesh: StructuredMesh, solution,
                      **meta) -> "FieldSnapshot":
        nodal = {"speed": solution.flow.speed, "Tt": solution.thermal.Tt.copy(),
                 "Tb": solution.thermal.Tb.copy(), "p": solution.flow.p.copy()}
        return cls(tag, stage, iteration, nodal, solution.cache.gamma.mean(axis=1), dict(meta))

    @property
    def name(self) -> str:
        return f"{self.tag}_{self.stage}_{self.iteration:04d}"


def _fmt(values) -> str:
    return "\n".join(FMT.format(float(v)) for v in np.asarray(values).ravel())


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def write_vtk(path, mesh: StructuredMesh, snapshot: FieldSnapshot) -> Path:
    path = Path(path)
    nxp, nyp = mesh.nx + 1, mesh.ny + 1
    xy = mesh.coords
    lines = ["# vtk DataFile Version 3.0", f"coolopt snapshot {snapshot.name}", "ASCII",
             "DATASET STRUCTURED_GRID", f"DIMENSIONS {nxp} {nyp} 1", f"POINTS {mesh.n_nodes} double"]
    lines += [f"{FMT.format(x)} {FMT.format(y)} {FMT.format(0.0)}" for x, y in xy]
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name in NODAL_FIELDS:
        if name in snapshot.nodal:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(snapshot.nodal[name])]
    lines += [f"CELL_DATA {mesh.n_elements}", "SCALARS gamma double 1", "LOOKUP_TABLE default",
              _fmt(snapshot.gamma)]
    _write(path, "\n".join(lines) + "\n")
    return path


def write_field_csv(path, points: np.ndarray, values: np.ndarray) -> Path:
    path = Path(path)
    rows = ["x,y,value"]
    rows += [f"{FMT.format(x)},{FMT.format(y)},{FMT.format(v)}"
             for (x, y), v in zip(points, np.asarray(values).ravel())]
    _write(path, "\n".join(rows) + "\n")
    return path


def write_csv(directory, mesh: StructuredMesh, snapshot: FieldSnapshot) -> list[Path]:
    directory = Path(directory)
    out = [write_field_csv(directory / f"{snapshot.name}_{name}.csv", mesh.coords, snapshot.nodal[name])
           for name in NODAL_FIELDS if name in snapshot.nodal]
    out.append(write_field_csv(directory / f"{snapshot.name}_gamma.csv", mesh.element_centers(),
                               snapshot.gamma))
    return out


def save_snapshot(path, snapshot: FieldSnapshot) -> Path:
    """Lossless ``.npz`` copy, from which ``coolopt export`` regenerates VTK/CSV."""
    path = Path(path)
    arrays = {f"nodal_{k}": v for k, v in snapshot.nodal.items()}
    header = json.dumps({"tag": snapshot.tag, "stage": snapshot.stage, "iteration": snapshot.iteration,
                         "meta": snapshot.meta}, sort_keys=True)
    arrays.update(gamma=snapshot.gamma, header=np.array(header))
    try:
        # np.savez stamps the current time into the archive; a fixed date keeps bytes reproducible
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for key in sorted(arrays):
                buf = io.BytesIO()
                np.save(buf, arrays[key], allow_pickle=False)
                info = zipfile.ZipInfo(f"{key}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, buf.getvalue())
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc
    return path


def load_snapshot(path) -> FieldSnapshot:
    try:
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            nodal = {k[len("nodal_"):]: data[k] for k in data.files if k.startswith("nodal_")}
            gamma = data["gamma"]
    except (OSError, KeyError, ValueError) as exc:
        raise ArtifactError(f"cannot read snapshot {path}: {exc}") from exc
    return FieldSnapshot(header["tag"], header["stage"], header["iteration"], nodal, gamma, header["meta"])
