"""Condenser capacity, polarization and the modulus metric on uniform grids."""

from .capacity import (
    CapacityResult,
    GreenCapacity,
    PotentialField,
    SolverConfig,
    capacity,
    check_potential,
    discrete_energy,
    ring_capacity_oracle,
    solve_potential,
)
from .errors import CapLabError, ConfigError, DomainError, GeometryError, ParameterError, SolverError
from .geometry import (
    Sphere,
    SphericalCone,
    cone_alpha0,
    cone_radii,
    invert_point,
    polarize_points,
    three_spheres,
    three_spheres_radius,
)
from .grid import CompactMask, DomainConfig, GridDomain, GridSpec, build_domain, polarize_mask, polarize_mask_supersampled, rasterize_polyline
from .metric import OptConfig, modulus_metric, mu_sphere, radial_profile, roundness_ratio

__version__ = "0.1.0"

__all__ = [
    "CapLabError", "ConfigError", "DomainError", "GeometryError", "ParameterError", "SolverError",
    "CapacityResult", "GreenCapacity", "PotentialField", "SolverConfig", "capacity", "check_potential",
    "discrete_energy", "ring_capacity_oracle", "solve_potential",
    "Sphere", "SphericalCone", "cone_alpha0", "cone_radii", "invert_point", "polarize_points",
    "three_spheres", "three_spheres_radius",
    "CompactMask", "DomainConfig", "GridDomain", "GridSpec", "build_domain", "polarize_mask", "polarize_mask_supersampled", "rasterize_polyline",
    "OptConfig", "modulus_metric", "mu_sphere", "radial_profile", "roundness_ratio",
]
