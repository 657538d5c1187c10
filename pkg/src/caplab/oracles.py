"""Closed-form reference values used to check the grid computations.

The Grötzsch modulus is evaluated through the arithmetic-geometric mean,
K(k) = pi / (2 agm(1, sqrt(1 - k^2))), so it does not depend on any
library implementation of elliptic integrals.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .errors import ParameterError


def agm(a: float, b: float) -> float:
    if a <= 0 or b <= 0:
        raise ParameterError("agm needs positive arguments")
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def ellipk_agm(k: float) -> float:
    """Complete elliptic integral of the first kind, modulus ``k`` in [0, 1)."""
    if not 0 <= k < 1:
        raise ParameterError("modulus must lie in [0, 1)")
    return math.pi / (2.0 * agm(1.0, math.sqrt(1.0 - k * k)))


def grotzsch_modulus(r: float) -> float:
    """Modulus of the planar Grötzsch ring B(0,1) minus [0, r]."""
    if not 0 < r < 1:
        raise ParameterError("Grötzsch ring needs 0 < r < 1")
    rp = math.sqrt(1.0 - r * r)
    return 0.5 * math.pi * agm(1.0, rp) / agm(1.0, r)


def grotzsch_capacity(r: float) -> float:
    """Conformal capacity 2 pi / mu(r) of the planar Grötzsch ring."""
    return 2.0 * math.pi / grotzsch_modulus(r)


def grotzsch_radius(cap: float) -> float:
    """Inverse of :func:`grotzsch_capacity` (the capacity increases with r)."""
    if not cap > 0:
        raise ParameterError("capacity must be positive")
    f = lambda r: grotzsch_capacity(r) - cap  # noqa: E731
    lo, hi = 1e-300, 1 - 1e-16
    if f(hi) < 0:
        raise ParameterError("capacity too large for a Grötzsch ring")
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)


def pseudo_hyperbolic(x, y, center=(0.0, 0.0), radius: float = 1.0) -> float:
    """|x - y| / |1 - x conj(y)| after mapping the disk to the unit disk."""
    c = complex(*center)
    z = (complex(*x) - c) / radius
    w = (complex(*y) - c) / radius
    if abs(z) >= 1 or abs(w) >= 1:
        raise ParameterError("points must lie in the open disk")
    return abs(z - w) / abs(1 - z * w.conjugate())


def disk_modulus_metric(x, y, center=(0.0, 0.0), radius: float = 1.0) -> float:
    """Modulus metric of a planar disk.

    By conformal invariance a Möbius self-map of the disk sends x to 0,
    after which the extremal continuum is the radial segment and the
    value is the Grötzsch capacity at the pseudo-hyperbolic distance.
    """
    rho = pseudo_hyperbolic(x, y, center, radius)
    return 0.0 if rho == 0 else grotzsch_capacity(rho)


def disk_level_radius(x0, direction, level: float, center=(0.0, 0.0), radius: float = 1.0) -> float:
    """Distance from ``x0`` along ``direction`` at which the disk metric equals ``level``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    x0 = np.asarray(x0, dtype=float)
    c = np.asarray(center, dtype=float)
    # distance to the circle along the ray
    b = float(d @ (x0 - c))
    tmax = -b + math.sqrt(b * b - (float((x0 - c) @ (x0 - c)) - radius**2))
    f = lambda t: disk_modulus_metric(x0, x0 + t * d, center, radius) - level  # noqa: E731
    return brentq(f, 1e-12 * radius, tmax * (1 - 1e-12), xtol=1e-14, rtol=1e-14)
