"""Needlet coefficient statistics over Poisson fields.

Ties frames to fields: per-center moments sigma_jk^2 and b_jk, normalized
compensated coefficients, de-Poissonized vectors with their exact coupling,
center selection for coefficient vectors, and exact covariance matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import beta_sums, splitmix_uniforms, stream_id
from .errors import ConvergenceError
from .field import (
    FieldRealization,
    SphereDensity,
    poisson_draw,
    rng_for,
    sample_density_points,
)
from .frame import NeedletFrame, profile, profile_interp
from .sphere import build_quadrature, farthest_point_indices

QUAD_REL_TOL = 1e-5

# Separation-window constants for the sqrt(d)-net check on selections.
NET_LOWER_C = 0.25
NET_UPPER_C = 8.0


@dataclass(frozen=True)
class CoeffStats:
    """Second and first moments of one needlet against the field density."""

    j: int
    k: int
    sigma_sq: float
    b: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)


def _moment_grid(frame: NeedletFrame, j: int, density: SphereDensity, power: int):
    """Exact-degree grid for integrating psi^power * f (doubled for general f)."""
    sc = frame.scale(j)
    if density.harmonic_degree is not None:
        degree = power * sc.l_max + density.harmonic_degree
        return build_quadrature(degree, node_budget=frame.node_budget), None
    degree = power * sc.l_max + 16
    return (
        build_quadrature(degree, node_budget=frame.node_budget),
        build_quadrature(2 * degree, node_budget=frame.node_budget),
    )


def _psi_on_grid(frame: NeedletFrame, j: int, ks, grid) -> np.ndarray:
    """(len(ks), n_nodes) matrix of psi_jk values, exact recurrence."""
    sc = frame.scale(j)
    ks = np.atleast_1d(np.asarray(ks, dtype=int))
    centers = sc.centers[ks]
    dots = np.clip(grid.xyz @ centers.T, -1.0, 1.0)
    gvals = profile(frame, j, dots.ravel()).reshape(dots.shape)
    return (np.sqrt(sc.weights[ks])[None, :] * gvals).T


def coeff_stats(frame: NeedletFrame, density: SphereDensity, j: int, k: int) -> CoeffStats:
    """sigma_jk^2 = int psi^2 f and b_jk = int psi f by exact-degree quadrature.

    Bandlimited densities use a single grid whose degree covers the product
    exactly; general densities get a resolution-doubling agreement check.
    """
    grid, fine = _moment_grid(frame, j, density, power=2)
    psi = _psi_on_grid(frame, j, [k], grid)[0]
    fw = density(grid.xyz) * grid.weights
    sigma_sq = float(np.dot(fw, psi * psi))
    b = float(np.dot(fw, psi))
    if fine is not None:
        psi2 = _psi_on_grid(frame, j, [k], fine)[0]
        fw2 = density(fine.xyz) * fine.weights
        s2 = float(np.dot(fw2, psi2 * psi2))
        if abs(s2 - sigma_sq) > QUAD_REL_TOL * max(abs(s2), 1e-300):
            raise ConvergenceError(f"sigma^2 quadrature for (j={j}, k={k}) did not converge")
        sigma_sq, b = s2, float(np.dot(fw2, psi2))
    return CoeffStats(j=j, k=k, sigma_sq=sigma_sq, b=b)


@dataclass(frozen=True)
class CoeffSelection:
    """d centers at one scale, spread by greedy farthest-point selection."""

    j: int
    indices: np.ndarray
    min_separation: float

    @property
    def d(self) -> int:
        return len(self.indices)


def select_centers(frame: NeedletFrame, j: int, d: int) -> CoeffSelection:
    """Greedy farthest-point pick of d scale-j centers.

    min_separation is +inf by convention for d = 1; for d >= 2 the selection
    satisfies the sqrt(d)-net window NET_LOWER_C/sqrt(d) <= sep <= NET_UPPER_C/sqrt(d)
    whenever d is small relative to K_j (the regime the bounds use).
    """
    sc = frame.scale(j)
    if d < 1 or d > sc.count:
        raise ValueError(f"cannot select {d} of {sc.count} centers at scale {j}")
    idx = farthest_point_indices(sc.centers, d)
    if d == 1:
        return CoeffSelection(j=j, indices=idx, min_separation=math.inf)
    pts = sc.centers[idx]
    dots = np.clip(pts @ pts.T, -1.0, 1.0)
    np.fill_diagonal(dots, -1.0)
    min_sep = float(np.arccos(dots.max()))
    return CoeffSelection(j=j, indices=idx, min_separation=min_sep)


def selection_stats(
    frame: NeedletFrame, density: SphereDensity, selection: CoeffSelection
) -> list[CoeffStats]:
    """CoeffStats for every selected center, sharing one quadrature grid."""
    grid, fine = _moment_grid(frame, selection.j, density, power=2)
    psi = _psi_on_grid(frame, selection.j, selection.indices, grid)
    fw = density(grid.xyz) * grid.weights
    sigma_sq = psi * psi @ fw
    b = psi @ fw
    if fine is not None:
        psi2 = _psi_on_grid(frame, selection.j, selection.indices, fine)
        fw2 = density(fine.xyz) * fine.weights
        s2 = psi2 * psi2 @ fw2
        if np.max(np.abs(s2 - sigma_sq)) > QUAD_REL_TOL * max(float(np.max(np.abs(s2))), 1e-300):
            raise ConvergenceError("sigma^2 quadrature did not converge across the selection")
        sigma_sq, b = s2, psi2 @ fw2
    return [
        CoeffStats(j=selection.j, k=int(k), sigma_sq=float(s), b=float(bb))
        for k, s, bb in zip(selection.indices, sigma_sq, b)
    ]


@dataclass(frozen=True)
class CoeffVector:
    """One realization of the normalized compensated coefficient vector."""

    values: np.ndarray
    j: int
    selection: CoeffSelection
    R_t: float
    seed: int | None = None


def _psi_at_points(
    frame: NeedletFrame, j: int, ks: np.ndarray, xyz: np.ndarray, exact: bool = False
) -> np.ndarray:
    """(n_points, d) needlet values; tabulated profile unless exact requested."""
    sc = frame.scale(j)
    centers = sc.centers[ks]
    amps = np.sqrt(sc.weights[ks])
    if xyz.shape[0] == 0:
        return np.empty((0, len(ks)))
    dots = np.clip(xyz @ centers.T, -1.0, 1.0)
    if exact:
        gvals = profile(frame, j, dots.ravel()).reshape(dots.shape)
    else:
        gvals = profile_interp(frame, j, dots)
    return gvals * amps[None, :]


def beta_tilde(
    realization: FieldRealization,
    frame: NeedletFrame,
    density: SphereDensity,
    selection: CoeffSelection,
    R_t: float,
    stats: list[CoeffStats] | None = None,
    sources=(),
    exact: bool = True,
) -> CoeffVector:
    """Normalized compensated coefficients of one realization.

    Component k: (sum_i psi_jk(X_i) + source terms - R_t * b_jk) / (sqrt(R_t) sigma_jk).
    Centering always uses the theoretical R_t * b_jk of the background law;
    under the point-source alternative the atoms shift the mean.
    """
    if stats is None:
        stats = selection_stats(frame, density, selection)
    if any(s.j != selection.j for s in stats):
        raise ValueError("stats do not match the selection's scale")
    sigmas = np.array([s.sigma for s in stats])
    bs = np.array([s.b for s in stats])
    psi = _psi_at_points(frame, selection.j, selection.indices, realization.points, exact=exact)
    sums = psi.sum(axis=0)
    if realization.source_counts:
        if len(sources) != len(realization.source_counts):
            raise ValueError("realization has source counts but no matching source list")
        src_xyz = np.array([[s.location.x, s.location.y, s.location.z] for s in sources])
        src_psi = _psi_at_points(frame, selection.j, selection.indices, src_xyz, exact=True)
        sums = sums + np.asarray(realization.source_counts, dtype=float) @ src_psi
    values = (sums - R_t * bs) / (math.sqrt(R_t) * sigmas)
    return CoeffVector(values=values, j=selection.j, selection=selection, R_t=R_t)


def empirical_beta_hat(points, frame: NeedletFrame, j: int, k: int) -> float:
    """Plain empirical coefficient: the mean of psi_jk over the point list."""
    from .sphere import points_to_array

    xyz = points_to_array(points)
    if xyz.shape[0] == 0:
        raise ValueError("empirical coefficient needs at least one point")
    sc = frame.scale(j)
    if not 0 <= k < sc.count:
        raise IndexError(f"center index {k} out of range for scale {j}")
    vals = _psi_at_points(frame, j, np.array([k]), xyz, exact=True)
    return float(vals.mean())


def depoissonized_vector(
    n: int,
    points: np.ndarray,
    frame: NeedletFrame,
    selection: CoeffSelection,
    density: SphereDensity | None = None,
) -> np.ndarray:
    """Fixed-n vector: components n^(-1/2) sum_i psi_jk(X_i) / sigma_jk.

    Exact coupling identities against the Poissonized vector hold only for
    the uniform density at scales j > 1, so those hypotheses are enforced.
    """
    if density is None:
        density = SphereDensity.uniform()
    if not density.is_uniform:
        raise ValueError("de-Poissonized coupling requires the uniform density")
    if selection.j <= 1:
        raise ValueError("de-Poissonized coupling requires scale j > 1")
    xyz = np.atleast_2d(np.asarray(points, dtype=float))
    if xyz.shape[0] != n:
        raise ValueError(f"expected exactly {n} points, got {xyz.shape[0]}")
    stats = selection_stats(frame, density, selection)
    sigmas = np.array([s.sigma for s in stats])
    psi = _psi_at_points(frame, selection.j, selection.indices, xyz, exact=True)
    return psi.sum(axis=0) / (math.sqrt(n) * sigmas)


def coupled_depoissonization_moment(
    n: int,
    frame: NeedletFrame,
    selection: CoeffSelection,
    replicates: int,
    base_seed: int,
) -> tuple[float, float]:
    """Monte Carlo E[(Y'_l - Y_l)^2] for the shared-stream coupling.

    Y uses the first N ~ Poisson(n) points of one i.i.d. uniform stream and
    Y' the first n points of the same stream, so the difference involves
    |N - n| tail points only.  Returns (estimate, std_error), averaging over
    components and replicates.
    """
    density = SphereDensity.uniform()
    stats = selection_stats(frame, density, selection)
    sigmas = np.array([s.sigma for s in stats])
    per_rep = np.empty(replicates)
    for r in range(replicates):
        rng = rng_for(base_seed + r)
        big_n = poisson_draw(float(n), rng)
        m = max(big_n, n)
        pts = sample_density_points(density, m, rng)
        psi = _psi_at_points(frame, selection.j, selection.indices, pts, exact=False)
        lo, hi = min(big_n, n), max(big_n, n)
        diff = psi[lo:hi].sum(axis=0) / (math.sqrt(n) * sigmas)
        per_rep[r] = float(np.mean(diff * diff))
    est = float(per_rep.mean())
    se = float(per_rep.std(ddof=1) / math.sqrt(replicates))
    return est, se


@dataclass(frozen=True)
class CovMatrix:
    """d x d covariance with a provenance flag: target, exact, or empirical."""

    matrix: np.ndarray
    kind: str

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T)).min())

    def max_offdiag(self) -> float:
        if self.d < 2:
            return 0.0
        od = self.matrix - np.diag(np.diag(self.matrix))
        return float(np.max(np.abs(od)))


def covariance_exact(
    frame: NeedletFrame,
    density: SphereDensity,
    selection: CoeffSelection,
    R_t: float,
) -> CovMatrix:
    """Exact covariance of the normalized coefficient vector.

    Gamma(k1,k2) = int psi_jk1 psi_jk2 f / (sigma_jk1 sigma_jk2); free of R_t
    by the normalization, with unit diagonal by construction.
    """
    del R_t  # the normalized covariance does not depend on it
    grid, fine = _moment_grid(frame, selection.j, density, power=2)
    if fine is not None:
        grid, check = fine, grid
    else:
        check = None
    psi = _psi_on_grid(frame, selection.j, selection.indices, grid)
    fw = density(grid.xyz) * grid.weights
    raw = (psi * fw[None, :]) @ psi.T
    if check is not None:
        psi_c = _psi_on_grid(frame, selection.j, selection.indices, check)
        fw_c = density(check.xyz) * check.weights
        raw_c = (psi_c * fw_c[None, :]) @ psi_c.T
        if np.max(np.abs(raw - raw_c)) > QUAD_REL_TOL * max(float(np.max(np.abs(raw))), 1e-300):
            raise ConvergenceError("covariance quadrature did not converge")
    sig = np.sqrt(np.diag(raw))
    gamma = raw / np.outer(sig, sig)
    return CovMatrix(matrix=gamma, kind="exact")


def covariance_empirical(batch: np.ndarray) -> CovMatrix:
    """Sample covariance (about zero mean is NOT assumed; plain estimator)."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] < 2:
        raise ValueError("need at least two replicates")
    return CovMatrix(matrix=np.cov(batch, rowvar=False).reshape(batch.shape[1], batch.shape[1]),
                     kind="empirical")


class _CounterRng:
    """Scalar uniform source over a SplitMix64 counter stream (duck-typed rng)."""

    def __init__(self, stream: np.uint64):
        self.stream = np.uint64(stream)
        self.ctr = 0

    def uniform(self) -> float:
        val = splitmix_uniforms(self.stream, self.ctr, 1)[0]
        self.ctr += 1
        return float(val)


@dataclass(frozen=True)
class ReplicateDraws:
    """Counter-based replicate streams with their Poisson point counts.

    Any linear statistic of the same replicate set can be re-accumulated from
    these draws: the point stream of replicate r is fully determined by
    streams[r], so separate passes see identical points.
    """

    base_seed: int
    R_t: float
    streams: np.ndarray  # (M,) uint64 point-stream keys
    counts: np.ndarray  # (M,) int64 background point counts
    source_counts: np.ndarray | None = None  # (M, n_sources)

    @property
    def replicates(self) -> int:
        return len(self.counts)


def draw_replicates(
    R_t: float, replicates: int, base_seed: int, sources=(), t: float = 1.0
) -> ReplicateDraws:
    """Poisson counts and stream keys for a replicate batch.

    Replicate r derives everything from seed base_seed + r: one counter
    stream for its point count (and source counts), another for the points.
    """
    streams = np.empty(replicates, dtype=np.uint64)
    counts = np.empty(replicates, dtype=np.int64)
    src = np.empty((replicates, len(sources)), dtype=np.int64) if sources else None
    for r in range(replicates):
        streams[r] = stream_id(base_seed, r)
        crng = _CounterRng(stream_id(base_seed ^ 0x5BF0_3635, r))
        counts[r] = poisson_draw(R_t, crng)
        for p, source in enumerate(sources):
            src[r, p] = poisson_draw(source.rate * t, crng)
    return ReplicateDraws(
        base_seed=base_seed, R_t=R_t, streams=streams, counts=counts, source_counts=src
    )


def _acceptance_table(density: SphereDensity, n: int = 8193) -> np.ndarray | None:
    """f(z)/zeta2 on a uniform z-grid for axisymmetric rejection, else None."""
    if density.is_uniform:
        return None
    if density.kind != "legendre":
        raise ValueError("fast replicate batches support uniform or axisymmetric densities")
    z = np.linspace(-1.0, 1.0, n)
    xyz = np.column_stack([np.sqrt(np.maximum(0.0, 1.0 - z * z)), np.zeros(n), z])
    return density(xyz) / density.zeta2


def accumulate_zonal_sums(
    draws: ReplicateDraws,
    axes: np.ndarray,
    table: np.ndarray,
    accept_tab: np.ndarray | None = None,
) -> np.ndarray:
    """(M, d) sums of a tabulated zonal function around each axis.

    The table samples the function against <x, axis> on a uniform [-1, 1]
    grid; needlet profiles and zonal probe functions both fit this shape.
    """
    axes = np.atleast_2d(np.asarray(axes, dtype=float))
    return beta_sums(draws.streams, draws.counts, axes, table, accept_tab)


def simulate_coeff_batch(
    frame: NeedletFrame,
    density: SphereDensity,
    selection: CoeffSelection,
    R_t: float,
    replicates: int,
    base_seed: int,
    sources=(),
    t: float = 1.0,
    draws: ReplicateDraws | None = None,
) -> np.ndarray:
    """(replicates, d) matrix of coefficient vectors under the field law.

    Points are generated and folded into the needlet sums inside a fused
    counter-based kernel, so no point set is ever materialized; the result
    depends only on (base_seed, R_t, selection, density, sources).
    """
    j = selection.j
    stats = selection_stats(frame, density, selection)
    sigmas = np.array([s.sigma for s in stats])
    bs = np.array([s.b for s in stats])
    sc = frame.scale(j)
    centers = sc.centers[selection.indices]
    amps = np.sqrt(sc.weights[selection.indices])
    if draws is None:
        draws = draw_replicates(R_t, replicates, base_seed, sources=sources, t=t)
    tab_u, tab_g = _profile_table_for(frame, j)
    del tab_u
    accept = _acceptance_table(density)
    sums = accumulate_zonal_sums(draws, centers, tab_g, accept) * amps[None, :]
    if sources:
        src_xyz = np.array([[s.location.x, s.location.y, s.location.z] for s in sources])
        src_psi = _psi_at_points(frame, j, selection.indices, src_xyz, exact=True)
        sums += draws.source_counts.astype(float) @ src_psi
    return (sums - R_t * bs[None, :]) / (math.sqrt(R_t) * sigmas[None, :])


def _profile_table_for(frame: NeedletFrame, j: int):
    from .frame import _profile_table

    return _profile_table(frame, j)


def batch_to_csv(batch: np.ndarray, selection: CoeffSelection, path: str) -> None:
    """Dump a replicate batch as CSV rows (replicate, j, k, value)."""
    with open(path, "w") as fh:
        fh.write("replicate,j,k,value\n")
        for r, row in enumerate(batch):
            for k, v in zip(selection.indices, row):
                fh.write(f"{r},{selection.j},{int(k)},{v:.17g}\n")
