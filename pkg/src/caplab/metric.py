"""Modulus metric on grid domains.

``modulus_metric`` returns an upper bound of mu_D(x, y): the smallest
capacity found over rasterized polylines from x to y with a fixed
number of interior control points. The search is a seeded coordinate
pattern search with a shrinking step and random restarts.
"""

from __future__ import annotations

import hashlib
import logging
import math
import weakref
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import GreenCapacity, SolverConfig, _check_exponent, solve_potential
from .errors import DomainError, GeometryError, ParameterError
from .geometry import as_point
from .grid import CompactMask, GridDomain, rasterize_polyline, shortest_cell_path

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptConfig:
    m: int = 4
    restarts: int = 3
    seed: int = 0
    initial_step: float | None = None  # default |x - y| / 8
    min_step_cells: float = 0.5
    max_evals: int = 5000
    restart_scale: float = 0.1  # restart perturbation, fraction of |x - y|

    def __post_init__(self):
        if self.m < 0 or self.restarts < 0:
            raise ParameterError("m and restarts must be nonnegative")
        if self.max_evals < 1:
            raise ParameterError("max_evals must be positive")


@dataclass(frozen=True, eq=False)
class Polyline:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] not in (2, 3):
            raise GeometryError("polyline vertices must be a (k, 2|3) array")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @property
    def m(self) -> int:
        return max(self.vertices.shape[0] - 2, 0)

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())


@dataclass(frozen=True, eq=False)
class MetricResult:
    value: float
    minimizer: Polyline
    mask: CompactMask | None
    evals: int
    converged: bool
    segment_value: float = math.nan

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "vertices": self.minimizer.vertices.tolist(),
            "evals": self.evals,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class LevelSample:
    direction: tuple
    radius: float
    achieved: float


@dataclass(frozen=True)
class LevelSet:
    center: tuple
    level: float
    samples: tuple = field(default_factory=tuple)

    def points(self) -> np.ndarray:
        c = np.asarray(self.center)
        return np.array([c + s.radius * np.asarray(s.direction) for s in self.samples])

    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.samples])


class PlateEvaluator:
    """Capacity of plates on one domain, memoized by cell set."""

    def __init__(self, domain: GridDomain, n_exp: int | None = None, solver: SolverConfig | None = None):
        self.domain = domain
        self.p = _check_exponent(n_exp, domain.dim)
        self.solver = solver or SolverConfig()
        self.core = domain.core()
        self._green = GreenCapacity(domain) if self.p == 2 else None
        self._memo: dict[bytes, float] = {}
        self.computed = 0

    def admissible(self, mask: CompactMask) -> bool:
        return not np.any(mask.cells & ~self.core)

    def __call__(self, mask: CompactMask) -> float:
        key = hashlib.blake2b(mask.key(), digest_size=16).digest()
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if self._green is not None:
            val = self._green.capacity(mask.cells)
        else:
            val = solve_potential(self.domain, mask, self.p, self.solver).value
        self.computed += 1
        if len(self._memo) > 500_000:
            self._memo.clear()
        self._memo[key] = val
        return val

    def polyline(self, vertices: np.ndarray) -> tuple[float, CompactMask | None]:
        verts = _dedup(vertices)
        try:
            mask = rasterize_polyline(verts, self.domain)
        except (DomainError, GeometryError):
            return math.inf, None
        if not self.admissible(mask):
            return math.inf, None
        return self(mask), mask


_EVALUATORS: "weakref.WeakKeyDictionary[GridDomain, dict]" = weakref.WeakKeyDictionary()


def evaluator_for(domain: GridDomain, n_exp: int | None = None, solver: SolverConfig | None = None) -> PlateEvaluator:
    """Shared evaluator per (domain, exponent, solver settings)."""
    p = _check_exponent(n_exp, domain.dim)
    per = _EVALUATORS.setdefault(domain, {})
    key = (p, solver)
    if key not in per:
        per[key] = PlateEvaluator(domain, p, solver)
    return per[key]


def _dedup(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    keep = [0] + [i for i in range(1, len(v)) if not np.array_equal(v[i], v[i - 1])]
    return v[keep]


def _check_endpoint(domain: GridDomain, p, name: str) -> np.ndarray:
    p = as_point(p)
    if p.size != domain.dim:
        raise GeometryError(f"{name} has the wrong dimension")
    if not domain.contains_point(p):
        raise DomainError(f"{name} = {p.tolist()} is not inside the domain")
    return p


def _seed_polyline(domain: GridDomain, ev: PlateEvaluator, x, y, m: int) -> np.ndarray:
    """Interior control points of the starting curve."""
    ts = np.arange(1, m + 1) / (m + 1)
    straight = x + ts[:, None] * (y - x)
    val, _ = ev.polyline(np.vstack([x, straight, y]))
    if math.isfinite(val):
        return straight
    path = shortest_cell_path(ev.core, domain.cell_of(x), domain.cell_of(y))
    if path is None:
        raise DomainError("points in different components")
    centers = np.array([domain.spec.center_of(c) for c in path])
    k = max(m, 1)
    while True:
        idx = np.unique(np.linspace(0, len(path) - 1, k + 2).round().astype(int))[1:-1]
        pts = centers[idx]
        val, _ = ev.polyline(np.vstack([x, pts, y]))
        if math.isfinite(val) or k >= len(path):
            if not math.isfinite(val):
                pts = centers[1:-1]
            return pts
        k *= 2


def modulus_metric(domain: GridDomain, x, y, n_exp: int | None = None, opt: OptConfig | None = None,
                   solver: SolverConfig | None = None) -> MetricResult:
    """Upper bound of mu_D(x, y) by pattern search over polylines."""
    opt = opt or OptConfig()
    x = _check_endpoint(domain, x, "x")
    y = _check_endpoint(domain, y, "y")
    ev = evaluator_for(domain, n_exp, solver)
    if domain.cell_of(x) == domain.cell_of(y):
        return MetricResult(0.0, Polyline(np.vstack([x, y])), None, 0, True, 0.0)
    if not (ev.core[domain.cell_of(x)] and ev.core[domain.cell_of(y)]):
        raise DomainError("endpoint cell touches the outside region")

    rng = np.random.default_rng(opt.seed)
    h = domain.h
    dist = float(np.linalg.norm(y - x))
    evals = 0

    def f(P):
        nonlocal evals
        evals += 1
        return ev.polyline(np.vstack([x, P, y]))

    P0 = _seed_polyline(domain, ev, x, y, opt.m)
    best_P = P0.copy()
    best_val, best_mask = f(best_P)
    seg_val = best_val if np.allclose(P0, x + (np.arange(1, len(P0) + 1) / (len(P0) + 1))[:, None] * (y - x)) else math.nan
    min_step = opt.min_step_cells * h
    step0 = opt.initial_step if opt.initial_step is not None else max(dist / 8.0, 2 * min_step)
    budget_hit = False

    def local_search(P, val, mask):
        nonlocal budget_hit
        step = step0
        while step >= min_step:
            improved = True
            while improved:
                improved = False
                for i in rng.permutation(len(P)):
                    for a in range(domain.dim):
                        for sgn in (1.0, -1.0):
                            if evals >= opt.max_evals:
                                budget_hit = True
                                return P, val, mask
                            trial = P.copy()
                            trial[i, a] += sgn * step
                            tv, tm = f(trial)
                            if tv < val - 1e-12 * max(val, 1.0):
                                P, val, mask = trial, tv, tm
                                improved = True
            step *= 0.5
        return P, val, mask

    if len(best_P):
        best_P, best_val, best_mask = local_search(best_P, best_val, best_mask)
        for _ in range(opt.restarts):
            if budget_hit:
                break
            P = best_P + rng.normal(scale=opt.restart_scale * dist, size=best_P.shape)
            val, mask = f(P)
            if not math.isfinite(val):
                continue
            P, val, mask = local_search(P, val, mask)
            if val < best_val:
                best_P, best_val, best_mask = P, val, mask
    if not math.isfinite(best_val):
        raise DomainError("no admissible curve between the points")
    return MetricResult(best_val, Polyline(_dedup(np.vstack([x, best_P, y]))), best_mask, evals,
                        not budget_hit, seg_val)


def metric_upper_bound_segment(domain: GridDomain, x, y, n_exp: int | None = None,
                               solver: SolverConfig | None = None) -> float:
    """Capacity of the rasterized segment [x, y]."""
    x = _check_endpoint(domain, x, "x")
    y = _check_endpoint(domain, y, "y")
    ev = evaluator_for(domain, n_exp, solver)
    mask = rasterize_polyline(_dedup(np.vstack([x, y])), domain)
    if not ev.admissible(mask):
        raise DomainError("segment touches the outside region")
    return ev(mask)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise GeometryError("direction must be nonzero")
    return v / n


def radial_profile(domain: GridDomain, x0, direction, t_values: Sequence[float], n_exp: int | None = None,
                   opt: OptConfig | None = None, solver: SolverConfig | None = None) -> list[float]:
    """mu_D(x0, x0 + t direction) for each t, restricted to the inscribed ball."""
    x0 = _check_endpoint(domain, x0, "x0")
    d = _unit(direction)
    R0 = domain.inradius(x0)
    out = []
    for t in t_values:
        if not 0 <= t < R0:
            raise DomainError(f"sample t={t} leaves the inscribed ball of radius {R0:.6g}")
        if t == 0:
            out.append(0.0)
            continue
        out.append(modulus_metric(domain, x0, x0 + t * d, n_exp, opt, solver).value)
    return out


def mu_sphere(domain: GridDomain, x0, level: float, directions, tol: float = 0.01, n_exp: int | None = None,
              opt: OptConfig | None = None, solver: SolverConfig | None = None,
              bracket: float = 0.9) -> LevelSet:
    """Level set of mu_D(x0, .) sampled along rays by bisection on [0, bracket R0]."""
    if not level > 0:
        raise ParameterError("level must be positive")
    x0 = _check_endpoint(domain, x0, "x0")
    dirs = [_unit(d) for d in directions]
    R0 = domain.inradius(x0)
    t_hi = bracket * R0
    h = domain.h

    def mu(t, d):
        if t == 0:
            return 0.0
        return modulus_metric(domain, x0, x0 + t * d, n_exp, opt, solver).value

    tops = [mu(t_hi, d) for d in dirs]
    if min(tops) < level:
        raise ParameterError("level escapes safe region")
    samples = []
    for d, top in zip(dirs, tops):
        lo, hi = 0.0, t_hi
        f_lo, f_hi = -level, top - level
        best = (abs(f_hi), hi, top)
        for _ in range(60):
            if hi - lo < h / 32:
                break
            mid = 0.5 * (lo + hi)
            val = mu(mid, d)
            if abs(val - level) < best[0]:
                best = (abs(val - level), mid, val)
            if abs(val - level) <= tol * level:
                break
            if val < level:
                lo, f_lo = mid, val - level
            else:
                hi, f_hi = mid, val - level
        _, r, achieved = best
        samples.append(LevelSample(tuple(d.tolist()), float(r), float(achieved)))
    return LevelSet(tuple(x0.tolist()), float(level), tuple(samples))


def roundness_ratio(ls: LevelSet) -> float:
    """max / min distance from the center over the level-set samples."""
    if len(ls.samples) < 2:
        raise ParameterError("roundness needs at least two samples")
    r = ls.radii()
    return float(r.max() / r.min())


def unit_directions(dim: int, count: int, offset: float = 0.0) -> list[np.ndarray]:
    """Evenly spread unit vectors (angles in 2-D, a Fibonacci lattice in 3-D)."""
    if dim == 2:
        ang = offset + 2 * math.pi * np.arange(count) / count
        return [np.array([math.cos(a), math.sin(a)]) for a in ang]
    i = np.arange(count) + 0.5
    phi = np.arccos(1 - 2 * i / count)
    th = math.pi * (1 + 5**0.5) * i + offset
    return [np.array([math.cos(t) * math.sin(p), math.sin(t) * math.sin(p), math.cos(p)]) for t, p in zip(th, phi)]
