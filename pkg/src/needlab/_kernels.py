"""Fused numerical kernels for the Monte Carlo layer.

The replicated simulations touch billions of sphere points; generating each
point and folding it into the needlet sums in one fused pass is 10-30x
faster here than chaining vectorized array operations.  Kernels are compiled
with numba when it is importable; pure-numpy fallbacks reproduce the same
streams (identical counters, same arithmetic per point) within float
round-off of the accumulation order.

Point streams are counter-based: replicate r consumes SplitMix64 values
keyed by (stream_id(r), counter), so any replicate can be regenerated in
isolation and results do not depend on chunking or scheduling.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STREAM_STEP = np.uint64(0xD1342543DE82EF95)
_U53 = 1.0 / 9007199254740992.0  # 2^-53
_TWO_PI = 2.0 * math.pi


@njit(inline="always", cache=True)
def _mix64(z: np.uint64) -> np.uint64:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(inline="always", cache=True)
def _u01(stream: np.uint64, ctr: np.uint64) -> float:
    z = _mix64(stream + (ctr + np.uint64(1)) * _GOLDEN)
    return float(z >> np.uint64(11)) * _U53


def stream_id(base_seed: int, r: int) -> np.uint64:
    """Decorrelated SplitMix64 stream key for replicate r."""
    with np.errstate(over="ignore"):
        raw = np.uint64(base_seed & (2**64 - 1)) + np.uint64(r) * _STREAM_STEP
        return _mix64_np(raw)


def _mix64_np(z):
    with np.errstate(over="ignore"):
        z = np.uint64(z)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def splitmix_uniforms(stream: np.uint64, start: int, count: int) -> np.ndarray:
    """Vectorized counter-based uniforms; the numpy twin of the kernel stream."""
    with np.errstate(over="ignore"):
        ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = stream + ctr * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)).astype(np.float64) * _U53


@njit(cache=True)
def _table_lerp_kernel(u: np.ndarray, tab: np.ndarray, out: np.ndarray) -> None:
    n_tab = tab.shape[0]
    inv_h = (n_tab - 1) / 2.0
    last = n_tab - 2
    for i in range(u.shape[0]):
        v = u[i]
        if v > 1.0:
            v = 1.0
        elif v < -1.0:
            v = -1.0
        pos = (v + 1.0) * inv_h
        idx = int(pos)
        if idx > last:
            idx = last
        frac = pos - idx
        out[i] = tab[idx] * (1.0 - frac) + tab[idx + 1] * frac


def table_lerp(u: np.ndarray, tab: np.ndarray) -> np.ndarray:
    """Linear interpolation of a uniform [-1,1] table at the points u."""
    flat = np.ascontiguousarray(u, dtype=np.float64).ravel()
    out = np.empty_like(flat)
    if HAS_NUMBA:
        _table_lerp_kernel(flat, tab, out)
    else:
        n_tab = tab.shape[0]
        pos = (np.clip(flat, -1.0, 1.0) + 1.0) * ((n_tab - 1) / 2.0)
        idx = np.minimum(pos.astype(np.int64), n_tab - 2)
        frac = pos - idx
        out = tab[idx] * (1.0 - frac) + tab[idx + 1] * frac
    return out.reshape(np.shape(u))


@njit(cache=True)
def _beta_sums_uniform_kernel(
    streams: np.ndarray,  # (n_reps,) uint64
    counts: np.ndarray,  # (n_reps,) int64
    centers: np.ndarray,  # (d, 3)
    tab: np.ndarray,
    out: np.ndarray,  # (n_reps, d), preallocated zeros
) -> None:
    n_tab = tab.shape[0]
    inv_h = (n_tab - 1) / 2.0
    last = n_tab - 2
    d = centers.shape[0]
    for r in range(counts.shape[0]):
        stream = streams[r]
        ctr = np.uint64(0)
        one = np.uint64(1)
        for _ in range(counts[r]):
            u1 = _u01(stream, ctr)
            ctr += one
            u2 = _u01(stream, ctr)
            ctr += one
            z = 2.0 * u1 - 1.0
            phi = _TWO_PI * u2
            s = math.sqrt(max(0.0, 1.0 - z * z))
            x = s * math.cos(phi)
            y = s * math.sin(phi)
            for c in range(d):
                v = x * centers[c, 0] + y * centers[c, 1] + z * centers[c, 2]
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                pos = (v + 1.0) * inv_h
                idx = int(pos)
                if idx > last:
                    idx = last
                frac = pos - idx
                out[r, c] += tab[idx] * (1.0 - frac) + tab[idx + 1] * frac


@njit(cache=True)
def _beta_sums_accept_kernel(
    streams: np.ndarray,
    counts: np.ndarray,
    centers: np.ndarray,
    tab: np.ndarray,
    accept_tab: np.ndarray,  # acceptance probability f(z)/zeta2 on uniform z grid
    out: np.ndarray,
) -> None:
    n_tab = tab.shape[0]
    inv_h = (n_tab - 1) / 2.0
    last = n_tab - 2
    n_acc = accept_tab.shape[0]
    acc_inv_h = (n_acc - 1) / 2.0
    acc_last = n_acc - 2
    d = centers.shape[0]
    one = np.uint64(1)
    for r in range(counts.shape[0]):
        stream = streams[r]
        ctr = np.uint64(0)
        for _ in range(counts[r]):
            # rejection from the uniform sphere against f/zeta2
            while True:
                z = 2.0 * _u01(stream, ctr) - 1.0
                ctr += one
                u2 = _u01(stream, ctr)
                ctr += one
                u3 = _u01(stream, ctr)
                ctr += one
                pos = (z + 1.0) * acc_inv_h
                idx = int(pos)
                if idx > acc_last:
                    idx = acc_last
                frac = pos - idx
                acc = accept_tab[idx] * (1.0 - frac) + accept_tab[idx + 1] * frac
                if u3 <= acc:
                    break
            phi = _TWO_PI * u2
            s = math.sqrt(max(0.0, 1.0 - z * z))
            x = s * math.cos(phi)
            y = s * math.sin(phi)
            for c in range(d):
                v = x * centers[c, 0] + y * centers[c, 1] + z * centers[c, 2]
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                pos = (v + 1.0) * inv_h
                idx = int(pos)
                if idx > last:
                    idx = last
                frac = pos - idx
                out[r, c] += tab[idx] * (1.0 - frac) + tab[idx + 1] * frac


def _beta_sums_numpy(
    streams: np.ndarray,
    counts: np.ndarray,
    centers: np.ndarray,
    tab: np.ndarray,
    accept_tab: np.ndarray | None,
    out: np.ndarray,
) -> None:
    """Fallback path: same streams and per-point math, vectorized per replicate."""
    n_tab = tab.shape[0]
    for r in range(counts.shape[0]):
        n = int(counts[r])
        if n == 0:
            continue
        stream = streams[r]
        if accept_tab is None:
            u = splitmix_uniforms(stream, 0, 2 * n)
            z = 2.0 * u[0::2] - 1.0
            phi = _TWO_PI * u[1::2]
        else:
            zs = []
            phis = []
            start = 0
            need = n
            n_acc = accept_tab.shape[0]
            while need > 0:
                u = splitmix_uniforms(stream, start, 3 * need)
                start += 3 * need
                z = 2.0 * u[0::3] - 1.0
                pos = (z + 1.0) * ((n_acc - 1) / 2.0)
                idx = np.minimum(pos.astype(np.int64), n_acc - 2)
                frac = pos - idx
                acc = accept_tab[idx] * (1.0 - frac) + accept_tab[idx + 1] * frac
                keep = u[2::3] <= acc
                zs.append(z[keep])
                phis.append(_TWO_PI * u[1::3][keep])
                need = n - sum(len(a) for a in zs)
            # attempts consume counter triples in order, so the accepted
            # sequence matches the scalar kernel exactly
            z = np.concatenate(zs)[:n]
            phi = np.concatenate(phis)[:n]
        s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        pts = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
        dots = np.clip(pts @ centers.T, -1.0, 1.0)
        pos = (dots + 1.0) * ((n_tab - 1) / 2.0)
        idx = np.minimum(pos.astype(np.int64), n_tab - 2)
        frac = pos - idx
        vals = tab[idx] * (1.0 - frac) + tab[idx + 1] * frac
        out[r] += vals.sum(axis=0)


def beta_sums(
    streams: np.ndarray,
    counts: np.ndarray,
    centers: np.ndarray,
    tab: np.ndarray,
    accept_tab: np.ndarray | None = None,
) -> np.ndarray:
    """(n_reps, d) sums of tabulated profile values over simulated points.

    Row r accumulates counts[r] points of replicate stream streams[r]
    (uniform on the sphere, or rejection-thinned by accept_tab in z).
    """
    out = np.zeros((counts.shape[0], centers.shape[0]))
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    tab = np.ascontiguousarray(tab, dtype=np.float64)
    streams = np.ascontiguousarray(streams, dtype=np.uint64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    if HAS_NUMBA:
        if accept_tab is None:
            _beta_sums_uniform_kernel(streams, counts, centers, tab, out)
        else:
            _beta_sums_accept_kernel(
                streams, counts, centers, tab,
                np.ascontiguousarray(accept_tab, dtype=np.float64), out,
            )
    else:
        _beta_sums_numpy(streams, counts, centers, tab, accept_tab, out)
    return out
