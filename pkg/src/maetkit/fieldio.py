"""File formats: MFLD v1 field container, VTK export, emf-trace CSV.

MFLD v1 is the package's native field container: a short ASCII header followed by
a blank line and raw little-endian float64 node data in x-fastest order
(vector fields interleave the three components per node).  Round trips are
bit-exact.  The VTK legacy STRUCTURED_POINTS writer is export-only, for
visualisation in standard viewers.
"""

from __future__ import annotations

import io
import os

import numpy as np

from .grid import Grid3, ScalarField, VectorField

__all__ = [
    "write_mfld",
    "read_mfld",
    "write_vtk",
    "write_traces_csv",
    "read_traces_csv",
]

_MAGIC = "MFLD 1"
_TRACE_HEADER = "# center_x,center_y,center_z,t,m"


def _format_float(x: float) -> str:
    return repr(float(x))


def write_mfld(path: str | os.PathLike, field: ScalarField | VectorField) -> None:
    """Write a field as MFLD v1 (bit-exact round trip with :func:`read_mfld`)."""
    grid = field.grid
    kind = "vector" if isinstance(field, VectorField) else "scalar"
    header = "\n".join(
        [
            _MAGIC,
            f"kind {kind}",
            "dims {} {} {}".format(*grid.dims),
            "origin {} {} {}".format(*(_format_float(c) for c in grid.origin)),
            f"spacing {_format_float(grid.spacing)}",
            "data little-endian f64",
            "",
            "",
        ]
    )
    if kind == "vector":
        flat = np.transpose(field.values, (2, 1, 0, 3)).ravel(order="C")
    else:
        flat = field.values.ravel(order="F")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(flat, dtype="<f8").tobytes())


def read_mfld(path: str | os.PathLike) -> ScalarField | VectorField:
    """Read an MFLD v1 file written by :func:`write_mfld`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise ValueError(f"{path}: missing MFLD header terminator")
    lines = blob[:sep].decode("ascii").splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not an MFLD v1 file")
    meta: dict[str, str] = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        meta[key] = rest
    kind = meta.get("kind")
    if kind not in ("scalar", "vector"):
        raise ValueError(f"{path}: bad kind {kind!r}")
    dims = tuple(int(t) for t in meta["dims"].split())
    origin = tuple(float(t) for t in meta["origin"].split())
    spacing = float(meta["spacing"])
    if meta.get("data") != "little-endian f64":
        raise ValueError(f"{path}: unsupported data encoding {meta.get('data')!r}")
    grid = Grid3(dims, origin, spacing)
    ncomp = 3 if kind == "vector" else 1
    raw = np.frombuffer(blob[sep + 2 :], dtype="<f8")
    if raw.size != grid.n_nodes * ncomp:
        raise ValueError(
            f"{path}: payload has {raw.size} values, expected {grid.n_nodes * ncomp}"
        )
    if kind == "vector":
        values = raw.reshape(dims[2], dims[1], dims[0], 3).transpose(2, 1, 0, 3)
        return VectorField(grid, values)
    return ScalarField(grid, raw.reshape(dims, order="F"))


def write_vtk(path: str | os.PathLike, field: ScalarField | VectorField, name: str = "field") -> None:
    """Export a field as legacy ASCII VTK STRUCTURED_POINTS (write-only)."""
    grid = field.grid
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write("maetkit field export\n")
    buf.write("ASCII\n")
    buf.write("DATASET STRUCTURED_POINTS\n")
    buf.write("DIMENSIONS {} {} {}\n".format(*grid.dims))
    buf.write("ORIGIN {} {} {}\n".format(*(_format_float(c) for c in grid.origin)))
    h = _format_float(grid.spacing)
    buf.write(f"SPACING {h} {h} {h}\n")
    buf.write(f"POINT_DATA {grid.n_nodes}\n")
    if isinstance(field, VectorField):
        buf.write(f"VECTORS {name} double\n")
        rows = np.transpose(field.values, (2, 1, 0, 3)).reshape(-1, 3)
        for row in rows:
            buf.write(f"{row[0]:.9e} {row[1]:.9e} {row[2]:.9e}\n")
    else:
        buf.write(f"SCALARS {name} double 1\n")
        buf.write("LOOKUP_TABLE default\n")
        for v in field.values.ravel(order="F"):
            buf.write(f"{v:.9e}\n")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(buf.getvalue())


def write_traces_csv(
    path: str | os.PathLike,
    centers: np.ndarray,
    times: np.ndarray,
    values: np.ndarray,
) -> None:
    """Write emf traces: one row per (center, time), shared time axis."""
    centers = np.asarray(centers, dtype=float)
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (centers.shape[0], times.size):
        raise ValueError(
            f"values shape {values.shape} does not match {centers.shape[0]} centers x {times.size} times"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_TRACE_HEADER + "\n")
        for k in range(centers.shape[0]):
            cx, cy, cz = (_format_float(c) for c in centers[k])
            for j in range(times.size):
                fh.write(f"{cx},{cy},{cz},{_format_float(times[j])},{_format_float(values[k, j])}\n")


def read_traces_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read emf traces; returns ``(centers (K,3), times (T,), values (K,T))``."""
    raw = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if raw.shape[1] != 5:
        raise ValueError(f"{path}: expected 5 columns, got {raw.shape[1]}")
    centers: list[tuple[float, float, float]] = []
    rows: dict[tuple[float, float, float], list[tuple[float, float]]] = {}
    for cx, cy, cz, t, m in raw:
        key = (cx, cy, cz)
        if key not in rows:
            rows[key] = []
            centers.append(key)
        rows[key].append((t, m))
    times0 = np.array([t for t, _ in rows[centers[0]]])
    values = np.empty((len(centers), times0.size))
    for k, key in enumerate(centers):
        entries = rows[key]
        if len(entries) != times0.size or not np.array_equal(
            np.array([t for t, _ in entries]), times0
        ):
            raise ValueError(f"{path}: centers do not share a common time axis")
        values[k] = [m for _, m in entries]
    return np.array(centers, dtype=float), times0, values
