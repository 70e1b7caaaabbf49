import math

import numpy as np
import pytest

from needlab.bounds import fit_bound_constants
from needlab.field import SphereDensity
from needlab.frame import build_frame


@pytest.fixture(scope="session")
def frame6():
    """Shared B=2 frame with scales up to j=6."""
    return build_frame(2.0, 6)


@pytest.fixture(scope="session")
def uniform():
    return SphereDensity.uniform()


@pytest.fixture(scope="session")
def tilted_density():
    """(1 + 0.5 cos theta) / 4pi: zeta1 = 0.5/4pi, zeta2 = 1.5/4pi."""
    return SphereDensity.legendre([0.5])


@pytest.fixture(scope="session")
def constants6(frame6, uniform):
    return fit_bound_constants(frame6, uniform)


def real_harmonic(l: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic (test oracle via scipy)."""
    from scipy.special import sph_harm_y

    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if m == 0:
        return np.real(sph_harm_y(l, 0, theta, phi))
    y = sph_harm_y(l, abs(m), theta, phi)
    sign = (-1.0) ** abs(m)
    if m > 0:
        return math.sqrt(2.0) * sign * np.real(y)
    return math.sqrt(2.0) * sign * np.imag(y)


def grid_angles(grid):
    theta = np.arccos(np.clip(grid.xyz[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(grid.xyz[:, 1], grid.xyz[:, 0]), 2.0 * math.pi)
    return theta, phi
