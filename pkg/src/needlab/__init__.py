"""needlab: spherical needlet frames over Poisson fields, with bound calculators."""

from .sphere import (
    SpherePoint,
    QuadratureGrid,
    legendre_all,
    projection_kernel,
    spherical_distance,
    build_quadrature,
)

__all__ = [
    "SpherePoint",
    "QuadratureGrid",
    "legendre_all",
    "projection_kernel",
    "spherical_distance",
    "build_quadrature",
]

__version__ = "0.1.0"
