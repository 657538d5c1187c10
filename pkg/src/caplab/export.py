"""File output for fields, results and level sets.

Every writer records the resolved run configuration: CSV files in a
``# config:`` comment line, JSON files under a ``"config"`` key, and VTK
files in a sidecar ``<name>.config.json`` (the legacy VTK title line is
limited to 256 characters).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .capacity import CapacityResult, PotentialField
from .metric import LevelSet, MetricResult


def _dumps(obj, indent=None) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        if hasattr(o, "to_dict"):
            return o.to_dict()
        if hasattr(o, "value"):
            return o.value
        raise TypeError(f"not serializable: {type(o)}")

    return json.dumps(obj, indent=indent, default=default, sort_keys=True)


def write_json(path, result: dict, config: dict) -> Path:
    path = Path(path)
    path.write_text(_dumps({"config": config, "result": result}, indent=2) + "\n")
    return path


def write_capacity_json(path, res: CapacityResult, config: dict) -> Path:
    return write_json(path, res.to_dict(), config)


def write_metric_json(path, res: MetricResult, config: dict) -> Path:
    return write_json(path, res.to_dict(), config)


def _field_values(fld: PotentialField | CapacityResult) -> tuple[np.ndarray, object]:
    if isinstance(fld, CapacityResult):
        fld = fld.field
    return np.asarray(fld.values, dtype=float), fld.domain.spec


def write_field_vtk(path, fld: PotentialField | CapacityResult, config: dict) -> Path:
    """Legacy-format STRUCTURED_POINTS file with point data at cell centers."""
    path = Path(path)
    values, spec = _field_values(fld)
    dims = list(values.shape) + [1] * (3 - values.ndim)
    h = spec.h
    origin = [o + 0.5 * h for o in spec.origin] + [0.0] * (3 - values.ndim)
    side = path.with_name(path.name + ".config.json")
    with path.open("w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"potential field; configuration in {side.name}\n")
        f.write("ASCII\nDATASET STRUCTURED_POINTS\n")
        f.write(f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}\n")
        f.write(f"ORIGIN {origin[0]!r} {origin[1]!r} {origin[2]!r}\n")
        f.write(f"SPACING {h!r} {h!r} {h!r}\n")
        f.write(f"POINT_DATA {values.size}\nSCALARS potential double 1\nLOOKUP_TABLE default\n")
        # VTK orders points with x varying fastest
        np.savetxt(f, values.reshape(dims).ravel(order="F"), fmt="%.17g")
    side.write_text(_dumps(config, indent=2) + "\n")
    return path


def read_field_vtk(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    dims = next(tuple(map(int, ln.split()[1:])) for ln in lines if ln.startswith("DIMENSIONS"))
    start = next(i for i, ln in enumerate(lines) if ln.startswith("LOOKUP_TABLE")) + 1
    vals = np.array([float(v) for v in lines[start:]])
    arr = vals.reshape(dims, order="F")
    return arr.reshape([d for d in dims if d > 1] or [1])


def _config_line(config: dict) -> str:
    return "# config: " + _dumps(config) + "\n"


def read_config_line(path) -> dict:
    with Path(path).open() as f:
        for ln in f:
            if ln.startswith("# config: "):
                return json.loads(ln[len("# config: "):])
            if not ln.startswith("#"):
                break
    raise ValueError(f"{path} has no config line")


def write_field_csv(path, fld: PotentialField | CapacityResult, config: dict) -> Path:
    """One row per cell: index columns then the potential value."""
    path = Path(path)
    values, _ = _field_values(fld)
    cols = ["i", "j", "k"][: values.ndim]
    with path.open("w", newline="") as f:
        f.write(_config_line(config))
        w = csv.writer(f)
        w.writerow(cols + ["value"])
        for idx in np.ndindex(values.shape):
            w.writerow(list(idx) + [repr(float(values[idx]))])
    return path


def write_levelset_csv(path, ls: LevelSet, config: dict) -> Path:
    path = Path(path)
    dim = len(ls.center)
    axes = "xyz"[:dim]
    with path.open("w", newline="") as f:
        f.write(_config_line(config))
        w = csv.writer(f)
        w.writerow([f"d{a}" for a in axes] + ["radius", "achieved"] + list(axes))
        for s, p in zip(ls.samples, ls.points()):
            w.writerow(list(s.direction) + [s.radius, s.achieved] + p.tolist())
    return path
