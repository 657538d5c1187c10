"""Closed-form geometry: sphere inversion, polarization of point sets,
the three-spheres construction and spherical cones.

Points are plain 1-D float arrays of length 2 or 3. Everything in this
module is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, ParameterError

# absolute tolerance (normalized units) for on-sphere / in-ball tests
MEMBERSHIP_TOL = 1e-12


def as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.size not in (2, 3):
        raise GeometryError(f"points must have 2 or 3 coordinates, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise GeometryError("point coordinates must be finite")
    return p


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(as_point(self.center)))
        r = float(self.radius)
        if not (r > 0 and math.isfinite(r)):
            raise ParameterError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        """Closed-ball membership with a relative tolerance."""
        d = np.linalg.norm(as_point(x) - self.center)
        return bool(d <= self.radius * (1.0 + tol))

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class SphericalCone:
    """Cone with vertex, unit axis, half opening angle and slant radius."""

    vertex: np.ndarray
    axis: np.ndarray
    half_angle: float
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "vertex", _frozen(as_point(self.vertex)))
        axis = as_point(self.axis)
        if axis.size != self.vertex.size:
            raise GeometryError("cone axis and vertex differ in dimension")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ParameterError("cone axis must be a unit vector")
        object.__setattr__(self, "axis", _frozen(axis))
        if not 0.0 < self.half_angle < math.pi / 2:
            raise ParameterError("cone half angle must lie in (0, pi/2)")
        if not self.radius > 0:
            raise ParameterError("cone radius must be positive")


class Branch(str, Enum):
    INTERIOR = "interior_branch"  # centre on the perpendicular through x0
    ORIGIN = "origin_branch"  # sphere passes through x0
    CAPPED = "capped_branch"  # interior radius would exceed k/(1-k); clamp it


@dataclass(frozen=True, eq=False)
class ThreeSpheresResult:
    sphere: Sphere
    theta: float
    branch: Branch


def invert_point(x, s: Sphere) -> np.ndarray:
    """Reflect ``x`` in the sphere ``s``: c + r^2 (x - c) / |x - c|^2."""
    p = as_point(x)
    v = p - s.center
    d2 = float(v @ v)
    if d2 == 0.0:
        raise GeometryError("center has no finite image")
    return s.center + (s.radius * s.radius / d2) * v


def _member(tree, p: np.ndarray, tol: float) -> bool:
    return bool(tree.query_ball_point(p, tol))


def polarize_points(points: Iterable, s: Sphere) -> list[np.ndarray]:
    """Polarize a finite point set with respect to ``s``.

    A point of the result lies in the closed ball when it, or its
    reflection, belongs to the input; it lies outside the ball only
    when both it and its reflection belong to the input. Set membership
    uses Euclidean distance with tolerance ``MEMBERSHIP_TOL`` scaled by
    ``max(1, radius)``.
    """
    pts = [as_point(p) for p in points]
    if not pts:
        return []
    for p in pts:
        if np.linalg.norm(p - s.center) == 0.0:
            raise GeometryError("polarization sphere center belongs to the set")
    tol = MEMBERSHIP_TOL * max(s.radius, 1.0)
    tree = cKDTree(np.array(pts))
    out: list[np.ndarray] = []
    for p in pts:
        ps = invert_point(p, s)
        if s.contains(p) or _member(tree, ps, tol):
            out.append(p)
        if s.contains(ps):
            out.append(ps)
    # drop duplicates within tolerance, keep first occurrence
    keep: list[np.ndarray] = []
    for p in out:
        if not any(np.linalg.norm(p - q) <= tol for q in keep):
            keep.append(p)
    return keep


def _seam(k: float) -> float:
    return math.pi - math.atan(1.0 / k)


def _check_k(k: float) -> None:
    if not (0.0 < k < 1.0):
        raise ParameterError(f"k must lie in (0, 1), got {k}")


def _normalized(k: float, theta: float) -> tuple[float, float, float, Branch]:
    """(lambda, height, radius, branch) of the construction for R = 1.

    Coordinates are those of the plane in which x1 = (-a, k sin t) and
    x2 = (k cos t, k sin t) with a = sqrt(1 - k^2 sin^2 t).
    """
    _check_k(k)
    if not (0.0 <= theta <= math.pi):
        raise ParameterError(f"theta must lie in [0, pi], got {theta}")
    st, ct = math.sin(theta), math.cos(theta)
    a = math.sqrt(1.0 - k * k * st * st)
    b = k * ct
    height = k * st
    if theta < _seam(k):
        lam = k * k / (a - b) + b
        return lam, height, math.sqrt(lam * lam + height * height), Branch.ORIGIN
    r2 = max(-b * a, 0.0)
    cap = k / (1.0 - k)
    if r2 <= cap * cap:
        return 0.0, height, math.sqrt(r2), Branch.INTERIOR
    # For k below ((sqrt 5 - 1)/2)^2 the perpendicular-centre sphere grows
    # past k/(1-k) near theta = pi.  Any centre t on the line of x1, x2 with
    # (t + a)(t - b) = r^2 keeps the pair symmetric, and containment of x0
    # only needs t beyond the sphere through x0, so a smaller radius works.
    lam = 0.5 * ((b - a) + math.sqrt((a + b) ** 2 + 4.0 * cap * cap))
    return lam, height, cap, Branch.CAPPED


def three_spheres_center(k: float, theta: float) -> tuple[float, float, Branch]:
    """Normalized centre (lambda, height) and branch for R = 1."""
    lam, height, _, branch = _normalized(k, theta)
    return lam, height, branch


def three_spheres_radius(k: float, theta: float) -> float:
    """Radius of the symmetrizing sphere for R = 1 as a function of theta."""
    return _normalized(k, theta)[2]


def three_spheres_radius_slope(k: float, theta: float) -> float:
    """Closed-form dR3/dtheta on the origin branch (R = 1)."""
    _check_k(k)
    st, ct = math.sin(theta), math.cos(theta)
    a = math.sqrt(1.0 - k * k * st * st)
    num = -2.0 * k**3 * st
    den = a * (a - k * ct) ** 2
    return num / den / (2.0 * three_spheres_radius(k, theta))


def _plane_frame(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (horizontal, vertical) frame with x1, x2 on one horizontal line."""
    d = u2 - u1
    e_h = d / np.linalg.norm(d)
    w = u2 - (u2 @ e_h) * e_h
    nw = np.linalg.norm(w)
    if nw > 1e-14 * max(1.0, np.linalg.norm(u2)):
        return e_h, w / nw
    # x0, x1, x2 collinear: any unit vector orthogonal to e_h will do
    if e_h.size == 2:
        return e_h, np.array([-e_h[1], e_h[0]])
    trial = np.eye(3)[int(np.argmin(np.abs(e_h)))]
    e_v = trial - (trial @ e_h) * e_h
    return e_h, e_v / np.linalg.norm(e_v)


def three_spheres(x1, x2, x0, R: float, k: float) -> ThreeSpheresResult:
    """Sphere S3 making x1 (on |x - x0| = R) and x2 (on |x - x0| = kR) symmetric.

    The configuration is normalized (x0 to the origin, R to 1, x1 and x2
    into a canonical 2-plane), solved in closed form, and mapped back.
    """
    _check_k(k)
    if not R > 0:
        raise ParameterError("R must be positive")
    p1, p2, p0 = as_point(x1), as_point(x2), as_point(x0)
    if not (p1.size == p2.size == p0.size):
        raise GeometryError("points differ in dimension")
    tol = 1e-9 * R
    if abs(np.linalg.norm(p1 - p0) - R) > tol:
        raise GeometryError("x1 is not on the sphere of radius R about x0")
    if abs(np.linalg.norm(p2 - p0) - k * R) > tol:
        raise GeometryError("x2 is not on the sphere of radius kR about x0")
    u1, u2 = (p1 - p0) / R, (p2 - p0) / R
    e_h, e_v = _plane_frame(u1, u2)
    theta = math.atan2(max(float(u2 @ e_v), 0.0), float(u2 @ e_h))
    theta = min(max(theta, 0.0), math.pi)
    lam, height, r3, branch = _normalized(k, theta)
    center = p0 + R * (lam * e_h + height * e_v)
    return ThreeSpheresResult(Sphere(center, R * r3), theta, branch)


def three_spheres_points(k: float, theta: float, R: float = 1.0, x0=(0.0, 0.0)):
    """Canonical (x1, x2) pair of the normalized construction, scaled by R."""
    p0 = as_point(x0)
    st, ct = math.sin(theta), math.cos(theta)
    a = math.sqrt(1.0 - k * k * st * st)
    x1 = np.zeros_like(p0)
    x2 = np.zeros_like(p0)
    x1[:2] = (-a, k * st)
    x2[:2] = (k * ct, k * st)
    return p0 + R * x1, p0 + R * x2


def cone_alpha0(r: float, R: float) -> float:
    """Critical opening angle arctan(sqrt(R^2 - r^2) / r)."""
    if not (0.0 < r < R):
        raise ParameterError(f"need 0 < r < R, got r={r}, R={R}")
    return math.atan2(math.sqrt(R * R - r * r), r)


def cone_radii(alpha: float, r: float, R: float) -> tuple[float, float]:
    """Slant radii (exterior, interior) of the cones with opening ``alpha``."""
    a0 = cone_alpha0(r, R)
    if not (0.0 <= alpha < a0):
        raise ParameterError(f"alpha must lie in [0, alpha0={a0}), got {alpha}")
    ca = math.cos(alpha)
    rho_ext = R - r / ca
    rho_int = r * (R * ca - r) / (R - r * ca)
    return rho_ext, rho_int


def cone_contains(cone: SphericalCone, y) -> bool:
    v = as_point(y) - cone.vertex
    d = float(np.linalg.norm(v))
    if d == 0.0 or d > cone.radius * (1.0 + MEMBERSHIP_TOL):
        return False
    c = float(np.clip(v @ cone.axis / d, -1.0, 1.0))
    return math.acos(c) <= cone.half_angle + MEMBERSHIP_TOL


def cone_probe_points(cone: SphericalCone, count: int = 5) -> list[np.ndarray]:
    """Deterministic sample points of a cone.

    Two on-axis points (half and full radius) followed by points on the
    lateral boundary at full radius, spread evenly around the axis.
    """
    pts = [cone.vertex + 0.5 * cone.radius * cone.axis, cone.vertex + cone.radius * cone.axis]
    n_side = max(count - 2, 0)
    ax = np.asarray(cone.axis)
    if ax.size == 2:
        perps = [np.array([-ax[1], ax[0]]), np.array([ax[1], -ax[0]])]
        dirs = [perps[i % 2] for i in range(n_side)]
        scales = [1.0 if i < 2 else 0.5 for i in range(n_side)]
    else:
        _, e1 = _plane_frame(np.zeros(3), ax)
        e2 = np.cross(ax, e1)
        phis = np.linspace(0.0, 2 * math.pi, n_side, endpoint=False)
        dirs = [math.cos(p) * e1 + math.sin(p) * e2 for p in phis]
        scales = [1.0] * n_side
    ca, sa = math.cos(cone.half_angle), math.sin(cone.half_angle)
    for w, s in zip(dirs, scales):
        pts.append(cone.vertex + s * cone.radius * (ca * ax + sa * w))
    return pts[:count]
