"""Field export (legacy VTK), effective-tensor tables, logs, von Mises stress."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .elasticity import stress_at_qp
from .mesh import PeriodicMesh

LOG_COLUMNS = ("iter", "J", "M", "J0", "J1", "L", "step", "pg_norm", "com", "cg_iterations")


def von_mises_from_stress(sigma):
    """``sqrt(3/2 s:s)`` with ``s = sigma - tr(sigma)/d I``; works on stacks."""
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[-1]
    tr = sum(sigma[..., i, i] for i in range(d))
    s = sigma - (tr / d)[..., None, None] * np.eye(d)
    return np.sqrt(1.5 * np.sum(s * s, axis=(-2, -1)))


def von_mises(op, load, corrector):
    """Per-element von Mises stress, Simpson-averaged over each element."""
    vm = von_mises_from_stress(stress_at_qp(op, load, corrector.u))
    w = op.mesh.qp_weights
    return vm @ w / w.sum()


def tile(mesh, values, k):
    """Periodic extension of canonical values to a ``k (N-1)`` grid per axis."""
    if k < 1:
        raise ValueError(f"tile factor must be >= 1, got {k}")
    arr = np.asarray(values, dtype=float).reshape(mesh.shape)
    return np.tile(arr, (k,) * mesh.d)


def write_vtk(path, fields, shape, spacing, origin=None, title="phasesplit field"):
    """Write point fields on a regular grid as ASCII legacy-VTK structured points.

    ``fields`` maps names to arrays of ``shape`` indexed ``[i_x, i_y(, i_z)]``.
    """
    d = len(shape)
    dims = list(shape) + [1] * (3 - d)
    sp = [spacing] * d + [1.0] * (3 - d)
    org = list(origin) if origin is not None else [0.0] * d
    org += [0.0] * (3 - d)
    npts = int(np.prod(shape))
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(n) for n in dims),
        "SPACING " + " ".join(repr(float(s)) for s in sp),
        "ORIGIN " + " ".join(repr(float(o)) for o in org),
        f"POINT_DATA {npts}",
    ]
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != tuple(shape):
            raise ValueError(f"field {name!r} has shape {arr.shape}, expected {tuple(shape)}")
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        # VTK wants x fastest
        lines.extend("%.17g" % x for x in arr.ravel(order="F"))
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path):
    """Read a file written by :func:`write_vtk`.

    Returns ``(shape, spacing, origin, fields)`` with fields indexed like the
    input of :func:`write_vtk`.
    """
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk"):
        raise ValueError(f"{path}: not a legacy VTK file")
    header = {}
    i = 4
    while i < len(tokens) and not tokens[i].startswith("POINT_DATA"):
        parts = tokens[i].split()
        if parts:
            header[parts[0]] = parts[1:]
        i += 1
    dims = [int(x) for x in header["DIMENSIONS"]]
    spacing = [float(x) for x in header["SPACING"]]
    origin = [float(x) for x in header["ORIGIN"]]
    shape = tuple(n for n in dims if n > 1) if dims[2] == 1 else tuple(dims)
    npts = int(tokens[i].split()[1])
    i += 1
    fields = {}
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("SCALARS"):
            name = line.split()[1]
            i += 2  # skip LOOKUP_TABLE
            vals = np.array([float(x) for x in tokens[i:i + npts]])
            fields[name] = vals.reshape(shape, order="F")
            i += npts
        else:
            i += 1
    return shape, spacing[0], origin[: len(shape)], fields


def write_field(path, mesh, v, extras=None, k=1):
    """Phase field ``v`` (and extra nodal fields) on the ``k``-tiled grid."""
    fields = {"phase": tile(mesh, v, k)}
    for name, arr in (extras or {}).items():
        fields[name] = tile(mesh, arr, k)
    write_vtk(path, fields, (k * mesh.n,) * mesh.d, mesh.h)


def write_cell_field(path, mesh, cell_fields, k=1):
    """Per-element values as points at the element centers."""
    fields = {name: tile(mesh, arr, k) for name, arr in cell_fields.items()}
    write_vtk(path, fields, (k * mesh.n,) * mesh.d, mesh.h, origin=[0.5 * mesh.h] * mesh.d)


def read_field(path, name="phase"):
    """Load a phase field written with ``k = 1``; returns ``(mesh, v)``."""
    shape, spacing, origin, fields = read_vtk(path)
    if len(set(shape)) != 1:
        raise ValueError(f"{path}: grid {shape} is not a cube")
    if name not in fields:
        raise ValueError(f"{path}: no field named {name!r}")
    n = shape[0]
    if not np.isclose(spacing * n, 1.0):
        raise ValueError(f"{path}: grid does not cover the unit cell (tiled export?)")
    mesh = PeriodicMesh(len(shape), n + 1)
    return mesh, fields[name].ravel()


TABLE_HEADER = ("phase", "load", "component", "value", "volume")


def write_table_csv(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for phase, load, comp, val, vol in table.rows():
            w.writerow([phase, load, comp, repr(float(val)), repr(float(vol))])


def read_table_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["phase"]), r["load"], r["component"], float(r["value"]), float(r["volume"]))
            for r in rows]


def write_log_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in history:
            w.writerow(["" if row.get(c) is None else row.get(c) for c in LOG_COLUMNS])


def export_fields(directory, mesh, v, extras=None, cell_fields=None, k=1, table=None, history=None):
    """Write ``field.vtk`` (+ ``cells.vtk``), ``effective.csv`` and ``log.csv``.

    Returns the list of written paths.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from None
    written = [out / "field.vtk"]
    write_field(written[0], mesh, v, extras, k)
    if cell_fields:
        written.append(out / "cells.vtk")
        write_cell_field(written[-1], mesh, cell_fields, k)
    if table is not None:
        written.append(out / "effective.csv")
        write_table_csv(written[-1], table)
    if history is not None:
        written.append(out / "log.csv")
        write_log_csv(written[-1], history)
    return written
