"""Poisson random measures on the sphere: densities, sampling, increments.

The field at time t has intensity R*t*f(x)dx with f a density bounded between
zeta1 and zeta2; realizations carry a diffuse background point set plus
per-source Poisson counts for the optional atomic components.  All sampling
is driven by counter-based (Philox) generators keyed by explicit seeds, so a
(spec, t, seed) triple maps to one realization regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sphere import FOUR_PI, SpherePoint, build_quadrature, legendre_all

_POISSON_INVERSION_CUTOFF = 30.0


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based generator for one stochastic operation."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def poisson_draw(lam: float, rng: np.random.Generator) -> int:
    """One exact Poisson sample: CDF inversion for small means, PTRS above.

    The transformed-rejection sampler accepts against the exact pmf through
    log-gamma, so the output is exact for any mean; the cutoff only picks the
    cheaper path.
    """
    if lam < 0 or not math.isfinite(lam):
        raise ValueError("mean must be finite and >= 0")
    if lam == 0.0:
        return 0
    if lam <= _POISSON_INVERSION_CUTOFF:
        u = rng.uniform()
        p = math.exp(-lam)
        acc = p
        k = 0
        while u > acc:
            k += 1
            p *= lam / k
            acc += p
            if k > 2000:  # numerically unreachable for lam <= 30
                break
        return k
    # Hormann's PTRS transformed rejection
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        u = rng.uniform() - 0.5
        v = rng.uniform()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v * inv_alpha / (a / (us * us) + b)) <= k * log_lam - lam - math.lgamma(k + 1.0):
            return int(k)


@dataclass(frozen=True)
class SphereDensity:
    """Probability density on the sphere, bounded between zeta1 and zeta2."""

    kind: str  # "uniform" | "legendre" | "expression"
    zeta1: float
    zeta2: float
    legendre_coeffs: tuple = ()  # a_l for l >= 1 in (1 + sum a_l P_l(cos theta)) / 4pi
    expression: str = ""
    harmonic_degree: int | None = None
    _norm: float = 1.0

    def __call__(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        if self.kind == "uniform":
            return np.full(xyz.shape[0], 1.0 / FOUR_PI)
        if self.kind == "legendre":
            z = np.clip(xyz[:, 2], -1.0, 1.0)
            pl = legendre_all(len(self.legendre_coeffs), z)
            vals = np.ones(xyz.shape[0])
            for l, a in enumerate(self.legendre_coeffs, start=1):
                vals += a * pl[l]
            return vals / FOUR_PI
        return _eval_expression(self.expression, xyz) / self._norm

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    @staticmethod
    def uniform() -> "SphereDensity":
        return SphereDensity(kind="uniform", zeta1=1.0 / FOUR_PI, zeta2=1.0 / FOUR_PI,
                             harmonic_degree=0)

    @staticmethod
    def legendre(coeffs) -> "SphereDensity":
        """Axisymmetric bandlimited density (1 + sum_l a_l P_l(cos theta)) / 4pi."""
        coeffs = tuple(float(a) for a in coeffs)
        z = np.linspace(-1.0, 1.0, 20001)
        pl = legendre_all(len(coeffs), z)
        vals = np.ones_like(z)
        for l, a in enumerate(coeffs, start=1):
            vals += a * pl[l]
        lo = float(vals.min()) / FOUR_PI
        hi = float(vals.max()) / FOUR_PI
        if lo <= 0.0:
            raise ValueError("coefficients make the density touch zero; need zeta1 > 0")
        return SphereDensity(kind="legendre", zeta1=lo, zeta2=hi,
                             legendre_coeffs=coeffs, harmonic_degree=len(coeffs))

    @staticmethod
    def expression(expr: str, quad_degree: int = 128) -> "SphereDensity":
        """Density from a formula in theta/phi/x/y/z, normalized by quadrature."""
        grid = build_quadrature(quad_degree)
        raw = _eval_expression(expr, grid.xyz)
        if np.any(raw <= 0.0):
            raise ValueError("expression must be strictly positive on the sphere")
        norm = float(np.dot(grid.weights, raw))
        fine = build_quadrature(2 * quad_degree)
        raw_fine = _eval_expression(expr, fine.xyz)
        norm_fine = float(np.dot(fine.weights, raw_fine))
        if abs(norm - norm_fine) > 1e-8 * abs(norm_fine):
            raise ValueError("expression normalization did not converge; raise quad_degree")
        vals = raw_fine / norm_fine
        return SphereDensity(kind="expression", zeta1=float(vals.min()), zeta2=float(vals.max()),
                             expression=expr, _norm=norm_fine)


def _eval_expression(expr: str, xyz: np.ndarray) -> np.ndarray:
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    namespace = {
        "x": x, "y": y, "z": z, "theta": theta, "phi": phi,
        "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
        "abs": np.abs, "pi": math.pi,
    }
    vals = eval(expr, {"__builtins__": {}}, namespace)  # restricted namespace
    return np.asarray(vals, dtype=float) * np.ones(xyz.shape[0])


@dataclass(frozen=True)
class PointSource:
    """Atomic intensity component: a sky location with its own event rate."""

    location: SpherePoint
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("source rate must be >= 0")


@dataclass(frozen=True)
class PoissonFieldSpec:
    """Field law: background density, linear intensity R*t, optional sources."""

    density: SphereDensity
    rate: float
    sources: tuple[PointSource, ...] = ()

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def expected_count(self, t: float) -> float:
        return self.rate * t


@dataclass(frozen=True)
class FieldRealization:
    """One sampled field: diffuse points plus per-source counts."""

    t: float
    points: np.ndarray  # (n, 3) unit vectors
    source_counts: tuple[int, ...] = ()

    @property
    def background_count(self) -> int:
        return self.points.shape[0]

    def background_points(self) -> list[SpherePoint]:
        return [SpherePoint(*row) for row in self.points]

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("t,kind,theta,phi\n")
            z = np.clip(self.points[:, 2], -1.0, 1.0)
            theta = np.arccos(z)
            phi = np.mod(np.arctan2(self.points[:, 1], self.points[:, 0]), 2 * math.pi)
            for th, ph in zip(theta, phi):
                fh.write(f"{self.t:.17g},background,{th:.17g},{ph:.17g}\n")
            for p, c in enumerate(self.source_counts):
                fh.write(f"{self.t:.17g},source_{p},{c},\n")


def sample_density_points(
    density: SphereDensity, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n i.i.d. points with the given density, by rejection from uniform.

    Acceptance probability is f/zeta2 >= zeta1/zeta2, so the loop terminates
    quickly for any admissible density.
    """
    if n == 0:
        return np.empty((0, 3))
    out = np.empty((n, 3))
    got = 0
    # uniform densities accept everything; skip the rejection machinery
    direct = density.is_uniform
    while got < n:
        want = n - got
        batch = want if direct else int(want * density.zeta2 * FOUR_PI / max(density.zeta1 * FOUR_PI, 0.05)) + 16
        z = rng.uniform(-1.0, 1.0, batch)
        phi = rng.uniform(0.0, 2.0 * math.pi, batch)
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        pts = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
        if not direct:
            accept = rng.uniform(0.0, 1.0, batch) * density.zeta2 <= density(pts)
            pts = pts[accept]
        take = min(len(pts), want)
        out[got : got + take] = pts[:take]
        got += take
    return out


def sample_field(spec: PoissonFieldSpec, t: float, seed: int) -> FieldRealization:
    """Draw one field realization at time t (background + source counts)."""
    if t <= 0:
        raise ValueError("t must be positive")
    rng = rng_for(seed)
    n = poisson_draw(spec.expected_count(t), rng)
    pts = sample_density_points(spec.density, n, rng)
    counts = tuple(poisson_draw(src.rate * t, rng) for src in spec.sources)
    return FieldRealization(t=float(t), points=pts, source_counts=counts)


def increment_realization(
    spec: PoissonFieldSpec, realization: FieldRealization, t2: float, seed: int
) -> FieldRealization:
    """Extend a realization from its time t1 to t2 > t1 with fresh points.

    Only the increment is sampled; the union is returned, so the increment is
    independent of the past by construction.
    """
    t1 = realization.t
    if t2 < t1:
        raise ValueError(f"t2={t2} must not precede t1={t1}")
    if t2 == t1:
        return realization
    rng = rng_for(seed)
    n_new = poisson_draw(spec.rate * (t2 - t1), rng)
    new_pts = sample_density_points(spec.density, n_new, rng)
    inc_counts = [poisson_draw(src.rate * (t2 - t1), rng) for src in spec.sources]
    old_counts = realization.source_counts or tuple(0 for _ in spec.sources)
    counts = tuple(a + b for a, b in zip(old_counts, inc_counts))
    return FieldRealization(
        t=float(t2),
        points=np.vstack([realization.points, new_pts]),
        source_counts=counts,
    )
