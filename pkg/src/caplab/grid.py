"""Uniform cell grids: domains, compact masks, curve rasterization and
polarization of cell sets.

All set membership is decided at cell centers. A cell is addressed by
its integer index tuple; masks are boolean arrays over the bounding box
with C-order layout. The exterior of the bounding box is always treated
as lying outside the domain.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DomainError, GeometryError, ParameterError
from .geometry import Sphere, as_point

DEFAULT_CELL_BUDGET = 4_000_000


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GridSpec:
    dim: int
    origin: tuple
    extent: tuple
    cells: tuple
    budget: int = DEFAULT_CELL_BUDGET

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        for name in ("origin", "extent", "cells"):
            val = getattr(self, name)
            if len(val) != self.dim:
                raise ConfigError(f"grid.{name} needs {self.dim} entries, got {len(val)}")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        object.__setattr__(self, "cells", tuple(int(v) for v in self.cells))
        if any(e <= 0 for e in self.extent) or any(c <= 0 for c in self.cells):
            raise ConfigError("grid extent and cell counts must be positive")
        hs = [e / c for e, c in zip(self.extent, self.cells)]
        if max(hs) - min(hs) > 1e-12 * max(hs):
            raise ConfigError(f"grid spacing must be uniform across axes, got {hs}")
        if math.prod(self.cells) > self.budget:
            raise ConfigError(f"{math.prod(self.cells)} cells exceed the budget of {self.budget}")

    @property
    def h(self) -> float:
        return self.extent[0] / self.cells[0]

    @property
    def shape(self) -> tuple:
        return self.cells

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * (np.arange(self.cells[axis]) + 0.5)

    def centers(self) -> list[np.ndarray]:
        """Coordinate arrays of all cell centers, ``indexing='ij'``."""
        return np.meshgrid(*[self.axis_centers(a) for a in range(self.dim)], indexing="ij")

    def center_of(self, idx) -> np.ndarray:
        return np.asarray(self.origin) + self.h * (np.asarray(idx, dtype=float) + 0.5)

    def cell_of(self, p) -> tuple | None:
        """Index of the cell containing ``p``; None when ``p`` is off the grid."""
        q = (np.asarray(p, dtype=float) - np.asarray(self.origin)) / self.h
        idx = np.floor(q).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.cells)):
            return None
        return tuple(int(i) for i in idx)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "extent": list(self.extent), "cells": list(self.cells)}

    @classmethod
    def cube(cls, dim: int, half_width: float, cells: int, center=None) -> "GridSpec":
        """Cubic box ``center +- half_width`` with ``cells`` cells per axis."""
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(dim, tuple(c - half_width), (2 * half_width,) * dim, (cells,) * dim)


# --- shapes -----------------------------------------------------------------


def _shape_predicate(shape: dict, dim: int):
    kind = shape.get("type")
    try:
        if kind == "ball":
            c = np.asarray(shape["center"], dtype=float)
            r = float(shape["radius"])
            if c.size != dim:
                raise ConfigError("ball center dimension mismatch")
            if r < 0:
                raise ConfigError("ball radius must be nonnegative")

            def pred(X):
                d2 = sum((X[a] - c[a]) ** 2 for a in range(dim))
                return d2 < r * r

            return pred
        if kind == "box":
            lo = np.asarray(shape["lo"], dtype=float)
            hi = np.asarray(shape["hi"], dtype=float)
            if lo.size != dim or hi.size != dim:
                raise ConfigError("box corner dimension mismatch")

            def pred(X):
                m = np.ones(X[0].shape, dtype=bool)
                for a in range(dim):
                    m &= (X[a] > lo[a]) & (X[a] < hi[a])
                return m

            return pred
    except KeyError as exc:
        raise ConfigError(f"shape {kind!r} is missing parameter {exc}") from None
    raise ConfigError(f"unknown shape type {kind!r}")


@dataclass(frozen=True)
class DomainConfig:
    """A grid plus a sequence of ``union`` / ``difference`` shape operations."""

    grid: GridSpec
    shapes: tuple = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @classmethod
    def from_dict(cls, data: dict) -> "DomainConfig":
        try:
            dim = int(data["dim"])
            g = data["grid"]
            grid = GridSpec(dim, tuple(g["origin"]), tuple(g["extent"]), tuple(g["cells"]))
            shapes = tuple(dict(s) for s in data["shapes"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed domain config: {exc}") from None
        if not shapes:
            raise ConfigError("domain config lists no shapes")
        for s in shapes:
            if s.get("op", "union") not in ("union", "difference"):
                raise ConfigError(f"unknown shape op {s.get('op')!r}")
            _shape_predicate(s, dim)
        return cls(grid, shapes)

    @classmethod
    def from_json(cls, path) -> "DomainConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read domain config {path}: {exc}") from None
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"domain config {path} is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        return {"dim": self.dim, "grid": self.grid.to_dict(), "shapes": [dict(s) for s in self.shapes]}

    @classmethod
    def ball(cls, dim: int, radius: float, cells: int, center=None, margin: float = 0.0) -> "DomainConfig":
        """Ball domain on the cube that circumscribes it (plus ``margin``)."""
        c = [0.0] * dim if center is None else list(map(float, center))
        grid = GridSpec.cube(dim, radius + margin, cells, c)
        return cls(grid, ({"op": "union", "type": "ball", "center": c, "radius": radius},))


# --- domains and masks ----------------------------------------------------------


def _face_structure(dim: int) -> np.ndarray:
    return ndimage.generate_binary_structure(dim, 1)


def _n_components(cells: np.ndarray) -> int:
    _, n = ndimage.label(cells, structure=_face_structure(cells.ndim))
    return n


@dataclass(frozen=True, eq=False)
class GridDomain:
    spec: GridSpec
    inside: np.ndarray

    def __post_init__(self):
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != self.spec.shape:
            raise DomainError("inside mask shape does not match the grid")
        if not inside.any():
            raise DomainError("domain is empty")
        if _n_components(inside) != 1:
            raise DomainError("domain not connected")
        object.__setattr__(self, "inside", _readonly(inside))

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def shape(self) -> tuple:
        return self.spec.shape

    def cell_of(self, p) -> tuple | None:
        return self.spec.cell_of(as_point(p))

    def contains_point(self, p) -> bool:
        idx = self.cell_of(p)
        return idx is not None and bool(self.inside[idx])

    def core(self) -> np.ndarray:
        """Inside cells all of whose face neighbours are inside as well."""
        padded = np.pad(self.inside, 1)
        eroded = ndimage.binary_erosion(padded, structure=_face_structure(self.dim))
        return eroded[(slice(1, -1),) * self.dim]

    def cells_in_ball(self, s: Sphere) -> np.ndarray:
        X = self.spec.centers()
        d2 = sum((X[a] - s.center[a]) ** 2 for a in range(self.dim))
        return d2 <= (s.radius * (1.0 + 1e-12)) ** 2

    def ball_inside(self, s: Sphere) -> bool:
        """Cell-center test for the closed ball of ``s`` lying in the domain."""
        if s.dim != self.dim:
            raise GeometryError("sphere and domain differ in dimension")
        lo = np.asarray(self.spec.origin)
        hi = lo + np.asarray(self.spec.extent)
        if np.any(s.center - s.radius < lo) or np.any(s.center + s.radius > hi):
            return False
        ball = self.cells_in_ball(s)
        return bool(ball.any()) and bool(np.all(self.inside[ball]))

    def inradius(self, p) -> float:
        """Distance from ``p`` to the nearest outside cell center (grid estimate of dist(p, boundary))."""
        p = as_point(p)
        X = self.spec.centers()
        d2 = sum((X[a] - p[a]) ** 2 for a in range(self.dim))
        out = ~self.inside
        best = float(np.sqrt(d2[out].min())) if out.any() else math.inf
        # distance to the box faces (the exterior of the box is outside)
        lo = np.asarray(self.spec.origin)
        hi = lo + np.asarray(self.spec.extent)
        return min(best, float(np.min(p - lo)), float(np.min(hi - p)))


def build_domain(config: DomainConfig) -> GridDomain:
    """Rasterize a shape program: a cell is inside iff its center satisfies it."""
    X = config.grid.centers()
    inside = np.zeros(config.grid.shape, dtype=bool)
    for s in config.shapes:
        m = _shape_predicate(s, config.dim)(X)
        if s.get("op", "union") == "union":
            inside |= m
        else:
            inside &= ~m
    return GridDomain(config.grid, inside)


@dataclass(frozen=True, eq=False)
class CompactMask:
    """Nonempty face-connected set of inside cells."""

    cells: np.ndarray
    domain: GridDomain
    validate: bool = True

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != self.domain.shape:
            raise DomainError("mask shape does not match the domain grid")
        if self.validate:
            if not cells.any():
                raise DomainError("compact mask is empty")
            if np.any(cells & ~self.domain.inside):
                raise DomainError("compact mask leaves the domain")
            if _n_components(cells) != 1:
                raise DomainError("compact mask is not connected")
        object.__setattr__(self, "cells", _readonly(cells))

    @classmethod
    def from_indices(cls, indices: Sequence, domain: GridDomain) -> "CompactMask":
        cells = np.zeros(domain.shape, dtype=bool)
        for idx in indices:
            cells[tuple(idx)] = True
        return cls(cells, domain)

    def indices(self) -> np.ndarray:
        return np.argwhere(self.cells)

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def touches_outside(self) -> bool:
        return bool(np.any(self.cells & ~self.domain.core()))

    def key(self) -> bytes:
        return np.flatnonzero(self.cells).astype(np.int64).tobytes()


def is_connected(mask) -> bool:
    cells = mask.cells if isinstance(mask, CompactMask) else np.asarray(mask, dtype=bool)
    return _n_components(cells) == 1


def _segment_cells(a: np.ndarray, b: np.ndarray, spec: GridSpec, radius: float) -> np.ndarray:
    """Flat indices of cells whose centers are within ``radius`` of segment [a, b]."""
    org = np.asarray(spec.origin)
    lo = np.floor((np.minimum(a, b) - radius - org) / spec.h - 0.5).astype(int)
    hi = np.ceil((np.maximum(a, b) + radius - org) / spec.h - 0.5).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(spec.cells) - 1)
    if np.any(hi < lo):
        return np.empty(0, dtype=np.int64)
    rng = [np.arange(l, u + 1) for l, u in zip(lo, hi)]
    grid_idx = np.meshgrid(*rng, indexing="ij")
    C = np.stack([org[k] + spec.h * (grid_idx[k] + 0.5) for k in range(spec.dim)], axis=-1)
    d = b - a
    L2 = float(d @ d)
    t = np.zeros(C.shape[:-1]) if L2 == 0 else np.clip(((C - a) @ d) / L2, 0.0, 1.0)
    nearest = a + t[..., None] * d
    dist = np.linalg.norm(C - nearest, axis=-1)
    sel = dist <= radius
    return np.ravel_multi_index(tuple(g[sel] for g in grid_idx), spec.cells)


def rasterize_polyline(vertices, domain: GridDomain) -> CompactMask:
    """Supercover of a polyline: cells whose centers lie within h*sqrt(dim)/2 of it."""
    verts = [as_point(v) for v in vertices]
    if not verts:
        raise GeometryError("polyline has no vertices")
    for v in verts:
        if v.size != domain.dim:
            raise GeometryError("vertex dimension does not match the domain")
        if not domain.contains_point(v):
            raise DomainError(f"vertex {v.tolist()} is not inside the domain")
    for a, b in zip(verts[:-1], verts[1:]):
        if np.array_equal(a, b):
            raise GeometryError("consecutive polyline vertices coincide")
    spec = domain.spec
    radius = 0.5 * spec.h * math.sqrt(spec.dim) * (1.0 + 1e-9)
    flat = np.zeros(math.prod(spec.cells), dtype=bool)
    segs = list(zip(verts[:-1], verts[1:])) or [(verts[0], verts[0])]
    for a, b in segs:
        flat[_segment_cells(a, b, spec, radius)] = True
    cells = flat.reshape(spec.cells)
    if np.any(cells & ~domain.inside):
        raise DomainError("curve leaves domain")
    if _n_components(cells) != 1:  # cannot happen for the supercover radius used
        raise DomainError("rasterized curve is not connected")
    return CompactMask(cells, domain, validate=False)


# --- polarization ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PolarizedCells:
    """Result of polarizing a cell set.

    ``cells`` is the polarized set. ``off_grid`` counts input cells outside
    the closed ball whose reflected center is not a cell of the grid.
    ``sphere`` is the sphere actually used (center possibly nudged off a
    cell boundary).
    """

    cells: np.ndarray
    sphere: Sphere
    off_grid: int


def _nudge_center(s: Sphere, spec: GridSpec) -> Sphere:
    q = (s.center - np.asarray(spec.origin)) / spec.h
    if np.any(np.abs(q - np.round(q)) < 1e-9):
        return Sphere(s.center + spec.h * 1e-6, s.radius)
    return s


def reflected_membership(cells: np.ndarray, s: Sphere, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Cell-center realization of the reflected set.

    Returns ``(star, off_grid)`` where ``star[c]`` says whether the
    reflection of center(c) lies in a cell of ``cells`` and ``off_grid[c]``
    flags centers whose reflection falls off the grid.
    """
    X = np.stack(spec.centers(), axis=-1).reshape(-1, spec.dim)
    v = X - s.center
    d2 = np.einsum("ij,ij->i", v, v)
    safe = d2 > 0
    img = np.full_like(X, np.nan)
    img[safe] = s.center + (s.radius**2 / d2[safe])[:, None] * v[safe]
    q = np.floor((img - np.asarray(spec.origin)) / spec.h)
    ok = safe & np.all(np.isfinite(q), axis=1)
    qi = np.zeros(q.shape, dtype=np.int64)
    qi[ok] = q[ok].astype(np.int64)
    ok &= np.all((qi >= 0) & (qi < np.asarray(spec.cells)), axis=1)
    star = np.zeros(X.shape[0], dtype=bool)
    flat_cells = cells.reshape(-1)
    star[ok] = flat_cells[np.ravel_multi_index(tuple(qi[ok].T), spec.cells)]
    return star.reshape(spec.shape), (~ok).reshape(spec.shape)


def polarize_mask(mask, s: Sphere, *, info: bool = False):
    """Polarize a cell set with respect to ``s``.

    The closed ball of ``s`` must lie in the domain, so the domain itself
    is left unchanged. Returns a boolean cell array, or a
    :class:`PolarizedCells` record when ``info`` is set.
    """
    domain = mask.domain
    if s.dim != domain.dim:
        raise GeometryError("sphere and domain differ in dimension")
    s = _nudge_center(s, domain.spec)
    if not domain.ball_inside(s):
        raise DomainError("closed ball of the polarization sphere is not inside the domain")
    E = np.asarray(mask.cells, dtype=bool)
    in_ball = domain.cells_in_ball(s)
    star, off = reflected_membership(E, s, domain.spec)
    out = ((E | star) & in_ball) | ((E & star) & ~in_ball)
    if not info:
        return out
    # cells of E outside the ball whose reflection lands off the grid
    _, off_img = reflected_membership(np.ones_like(E), s, domain.spec)
    off_grid = int(np.sum(E & ~in_ball & off_img))
    return PolarizedCells(out, s, off_grid)


def _cell_samples(idx: np.ndarray, spec: GridSpec, samples: int) -> np.ndarray:
    """``samples**dim`` points of each closed cell in ``idx``, corners included; shape (n, m, dim)."""
    t = np.linspace(0.0, 1.0, samples)
    offs = np.stack(np.meshgrid(*[t] * spec.dim, indexing="ij"), axis=-1).reshape(-1, spec.dim)
    lo = np.asarray(spec.origin) + idx * spec.h
    return lo[:, None, :] + spec.h * offs[None, :, :]


def _reflect_to_cells(points: np.ndarray, s: Sphere, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Reflect ``points`` in ``s``; return (rows landing on the grid, their flat cell indices)."""
    v = points - s.center
    d2 = np.einsum("ij,ij->i", v, v)
    rows = np.nonzero(d2 > 0)[0]
    img = s.center + (s.radius**2 / d2[rows])[:, None] * v[rows]
    q = np.floor((img - np.asarray(spec.origin)) / spec.h)
    ok = np.all((q >= 0) & (q < np.asarray(spec.cells)), axis=1)
    return rows[ok], np.ravel_multi_index(tuple(q[ok].astype(np.int64).T), spec.cells)


def polarize_mask_supersampled(mask, s: Sphere, samples: int = 5) -> np.ndarray:
    """Polarization with the reflected set sampled inside each closed cell.

    Cell-center sampling loses thin sets whose reflection shrinks below a
    cell. Here a cell c also counts as reflected when some sample of c
    reflects into E, or some sample of a cell of E reflects into c. Both
    are points of the exact reflection of the closed cells, so the result
    contains the cell-center realization and grows with nested samples.
    """
    domain = mask.domain
    spec = domain.spec
    if s.dim != domain.dim:
        raise GeometryError("sphere and domain differ in dimension")
    if samples < 2:
        raise ParameterError("samples must be at least 2")
    s = _nudge_center(s, spec)
    if not domain.ball_inside(s):
        raise DomainError("closed ball of the polarization sphere is not inside the domain")
    E = np.asarray(mask.cells, dtype=bool)
    in_ball = domain.cells_in_ball(s)
    star = reflected_membership(E, s, spec)[0].reshape(-1)
    # forward: images of E, which shrink where E lies outside the ball
    P = _cell_samples(np.argwhere(E), spec, samples).reshape(-1, spec.dim)
    star[_reflect_to_cells(P, s, spec)[1]] = True
    # backward: cells of E outside the ball whose image meets E
    out_idx = np.argwhere(E & ~in_ball)
    if len(out_idx):
        P = _cell_samples(out_idx, spec, samples)
        m = P.shape[1]
        rows, flat = _reflect_to_cells(P.reshape(-1, spec.dim), s, spec)
        hit = np.zeros(len(out_idx) * m, dtype=bool)
        hit[rows] = E.reshape(-1)[flat]
        meets = hit.reshape(-1, m).any(axis=1)
        star[np.ravel_multi_index(tuple(out_idx[meets].T), spec.cells)] = True
    star = star.reshape(spec.shape)
    return ((E | star) & in_ball) | ((E & star) & ~in_ball)


def restrict_polarized(cells, s: Sphere, anchor, domain: GridDomain) -> CompactMask:
    """Face-connected component of ``cells`` within the closed ball containing ``anchor``."""
    cells = np.asarray(cells, dtype=bool)
    in_ball = domain.cells_in_ball(_nudge_center(s, domain.spec)) | domain.cells_in_ball(s)
    restricted = cells & in_ball
    idx = domain.cell_of(anchor)
    if idx is None or not restricted[idx]:
        raise DomainError("anchor is not in the restricted polarized set")
    labels, _ = ndimage.label(restricted, structure=_face_structure(domain.dim))
    return CompactMask(labels == labels[idx], domain)


# --- paths ---------------------------------------------------------------------------


def shortest_cell_path(allowed: np.ndarray, start: tuple, goal: tuple) -> list[tuple] | None:
    """Breadth-first face-adjacent path through ``allowed`` cells; None if unreachable."""
    if not (allowed[start] and allowed[goal]):
        return None
    shape = allowed.shape
    prev = {start: None}
    queue = deque([start])
    steps = []
    for a in range(len(shape)):
        for s in (-1, 1):
            e = [0] * len(shape)
            e[a] = s
            steps.append(tuple(e))
    while queue:
        cur = queue.popleft()
        if cur == goal:
            path = [cur]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for st in steps:
            nb = tuple(c + d for c, d in zip(cur, st))
            if all(0 <= nb[i] < shape[i] for i in range(len(shape))) and nb not in prev and allowed[nb]:
                prev[nb] = cur
                queue.append(nb)
    return None


# --- export --------------------------------------------------------------------------


def mask_runs(cells: np.ndarray) -> list[tuple[int, int]]:
    """Half-open runs ``[start, stop)`` of set cells in C-order linear indexing."""
    flat = np.asarray(cells, dtype=bool).reshape(-1).astype(np.int8)
    d = np.diff(np.concatenate([[0], flat, [0]]))
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def write_mask_rle(cells: np.ndarray, path, header: dict | None = None) -> None:
    cells = np.asarray(cells, dtype=bool)
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write("# shape " + " ".join(map(str, cells.shape)) + "\n")
        w = csv.writer(fh)
        w.writerow(["start", "stop"])
        w.writerows(mask_runs(cells))


def read_mask_rle(path) -> np.ndarray:
    shape = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# shape"):
                shape = tuple(int(v) for v in line.split()[2:])
            elif line and not line.startswith("#") and not line.startswith("start"):
                a, b = line.split(",")
                rows.append((int(a), int(b)))
    if shape is None:
        raise ConfigError(f"{path} has no shape header")
    flat = np.zeros(math.prod(shape), dtype=bool)
    for a, b in rows:
        flat[a:b] = True
    return flat.reshape(shape)
