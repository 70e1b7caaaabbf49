"""Construction of the needlet window profile b.

b is smooth, nonnegative, supported on [1/B, B], and its squares over the
geometric scales xi * B^-j sum to one for every xi >= 1.  The construction is
the usual smooth-bump recipe: mollify the indicator with
f(t) = exp(-1/(1-t^2)), integrate to a smooth step, chain two copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import WindowConstructionError

PARTITION_TOL = 1e-8


def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


def _smooth_step_exact(u: np.ndarray) -> np.ndarray:
    """int_{-1}^{u} bump / int_{-1}^{1} bump by per-point Gauss-Legendre."""
    from .sphere import gauss_legendre

    x, w = gauss_legendre(96)
    total = float(np.dot(w, _bump(x)))
    u = np.clip(u, -1.0, 1.0)
    half = 0.5 * (u + 1.0)
    # map the reference rule onto [-1, u] for every point at once
    nodes = (-1.0 + half[..., None]) + half[..., None] * x
    vals = _bump(nodes) @ w
    return half * vals / total


def _phi_exact(s: np.ndarray, B: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape)
    out[s <= 1.0 / B] = 1.0
    out[s >= 1.0] = 0.0
    mid = (s > 1.0 / B) & (s < 1.0)
    out[mid] = _smooth_step_exact(1.0 - (2.0 * B / (B - 1.0)) * (s[mid] - 1.0 / B))
    return out


def _cumulative_simpson(y: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral of equally spaced samples, Simpson on interval pairs.

    Odd endpoints are filled with the quadratic through the local triple, so
    the returned array has one cumulative value per sample.
    """
    n = len(y)
    out = np.zeros(n)
    if n < 3:
        if n == 2:
            out[1] = 0.5 * h * (y[0] + y[1])
        return out
    # even indices: classic composite Simpson
    pair = h / 3.0 * (y[0:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(pair)
    # odd indices: integrate half of the local quadratic
    left = h / 12.0 * (5.0 * y[0:-2:2] + 8.0 * y[1:-1:2] - y[2::2])
    out[1::2] = out[0:-2:2] + left
    return out


@dataclass(frozen=True)
class NeedletWindow:
    """Tabulated window b on [1/B, B] with a monotone-cubic interpolant.

    `__call__` reads the lookup table (fast, ~1e-10 accurate); `exact`
    re-integrates the bump per point (slow, ~1e-14) and is what the frame
    uses for its finitely many window slots, where interpolation wiggle
    would otherwise break the alternating-sum cancellations in the needlet
    tail.
    """

    B: float
    construction_grid_size: int
    xi_table: np.ndarray = field(repr=False)
    b_table: np.ndarray = field(repr=False)
    _interp: PchipInterpolator = field(repr=False)

    def __call__(self, xi) -> np.ndarray | float:
        """Evaluate b(xi); zero outside [1/B, B]."""
        scalar = np.isscalar(xi)
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape)
        inside = (xi > 1.0 / self.B) & (xi < self.B)
        if np.any(inside):
            out[inside] = np.maximum(self._interp(np.log(xi[inside])), 0.0)
        return float(out) if scalar else out

    def exact(self, xi) -> np.ndarray | float:
        """Evaluate b by direct quadrature of the bump construction."""
        scalar = np.isscalar(xi)
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        b_sq = _phi_exact(xi / self.B, self.B) - _phi_exact(xi, self.B)
        out = np.sqrt(np.maximum(b_sq, 0.0))
        return float(out[0]) if scalar else out

    def squared_sum(self, xi, j_terms: int | None = None) -> np.ndarray | float:
        """sum_{j>=0} b(xi * B^-j)^2; only finitely many terms are nonzero."""
        scalar = np.isscalar(xi)
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if j_terms is None:
            j_terms = int(math.ceil(math.log(float(xi.max()), self.B))) + 2
        acc = np.zeros(xi.shape)
        for j in range(j_terms + 1):
            acc += self(xi * self.B ** (-j)) ** 2
        return float(acc[0]) if scalar else acc


def build_window(B: float, construction_grid_size: int = 4096) -> NeedletWindow:
    """Tabulate the window b for a given band ratio B > 1.

    `construction_grid_size` controls both the Simpson resolution of the
    smooth step and the density of the lookup table (log-spaced on the
    support).  The partition-of-unity residual is audited at build time and a
    WindowConstructionError is raised if it exceeds 1e-8.
    """
    if B <= 1.0:
        raise ValueError("B must exceed 1")
    if construction_grid_size < 256:
        raise ValueError("construction grid too coarse; need >= 256")
    n = int(construction_grid_size)
    if n % 2:
        n += 1

    t = np.linspace(-1.0, 1.0, n + 1)
    h = 2.0 / n
    cum = _cumulative_simpson(_bump(t), h)
    psi_interp = PchipInterpolator(t, cum / cum[-1])

    def smooth_step(u: np.ndarray) -> np.ndarray:
        # Psi: 0 below -1, 1 above +1, smooth monotone in between
        return psi_interp(np.clip(u, -1.0, 1.0))

    def phi(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape)
        out[s <= 1.0 / B] = 1.0
        out[s >= 1.0] = 0.0
        mid = (s > 1.0 / B) & (s < 1.0)
        out[mid] = smooth_step(1.0 - (2.0 * B / (B - 1.0)) * (s[mid] - 1.0 / B))
        return out

    n_tab = 2 * n + 1
    log_xi = np.linspace(-math.log(B), math.log(B), n_tab)
    xi = np.exp(log_xi)
    b_sq = phi(xi / B) - phi(xi)
    b_tab = np.sqrt(np.maximum(b_sq, 0.0))
    b_tab[0] = 0.0
    b_tab[-1] = 0.0
    interp = PchipInterpolator(log_xi, b_tab)

    window = NeedletWindow(
        B=float(B),
        construction_grid_size=n,
        xi_table=xi,
        b_table=b_tab,
        _interp=interp,
    )

    probe = np.linspace(1.0, B**5, 200)
    residual = float(np.max(np.abs(window.squared_sum(probe) - 1.0)))
    if residual > PARTITION_TOL:
        raise WindowConstructionError(
            f"partition-of-unity residual {residual:.3e} exceeds {PARTITION_TOL}"
        )
    return window
