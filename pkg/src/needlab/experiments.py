"""Configuration-driven experiment harness.

Sweeps (j, R_t, d) over replicated coefficient simulations, assembles bound
reports next to empirical distance estimates, writes CSV/JSON/SVG reports,
and ships the two application demos: thresholding density estimation and
point-source testing.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundConstants, compute_bound_report, fit_bound_constants
from .coeffs import (
    covariance_exact,
    draw_replicates,
    select_centers,
    selection_stats,
    simulate_coeff_batch,
)
from .distances import (
    build_dictionary,
    empirical_d2_lower,
    empirical_wasserstein_1d,
)
from .errors import ValidationError
from .field import PointSource, SphereDensity, poisson_draw, rng_for, sample_density_points
from .frame import NeedletFrame, build_frame, profile, synthesize, NeedletCoefficients
from .sphere import FOUR_PI, SpherePoint, build_quadrature

# Python-loop seed stride between sweep configurations; each configuration
# owns [base + index*stride, base + index*stride + replicates).
CONFIG_SEED_STRIDE = 10_000_000

DEFAULT_COST_CEILING = 4e10  # replicates * R_t * d summed over configurations


@dataclass
class ExperimentConfig:
    """Sweep definition; mirrors the JSON configuration file key for key."""

    B: float = 2.0
    j_list: list = field(default_factory=lambda: [3])
    R_t_list: list = field(default_factory=lambda: [1e4])
    d_list: list = field(default_factory=lambda: [1])
    replicates: int = 1000
    base_seed: int = 20250607
    density: dict = field(default_factory=lambda: {"kind": "uniform"})
    sources: list = field(default_factory=list)
    tau: float = 3.0
    threads: int = 1
    cost_ceiling: float = DEFAULT_COST_CEILING
    out_dir: str = "."

    @staticmethod
    def from_json(path: str) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        return ExperimentConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg = ExperimentConfig(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.B <= 1.0:
            raise ValidationError("B must exceed 1")
        if not self.j_list or not self.R_t_list or not self.d_list:
            raise ValidationError("j_list, R_t_list and d_list must be nonempty")
        if self.replicates < 100:
            raise ValidationError("need at least 100 replicates")
        if any(r <= 0 for r in self.R_t_list):
            raise ValidationError("R_t values must be positive")
        if any(d < 1 for d in self.d_list):
            raise ValidationError("d values must be >= 1")
        if self.tau < 1:
            raise ValidationError("tau must be >= 1")

    def build_density(self) -> SphereDensity:
        kind = self.density.get("kind", "uniform")
        if kind == "uniform":
            return SphereDensity.uniform()
        if kind == "legendre":
            return SphereDensity.legendre(self.density["coefficients"])
        if kind == "expression":
            return SphereDensity.expression(self.density["expression"])
        raise ValidationError(f"unknown density kind {kind!r}")

    def build_sources(self) -> tuple[PointSource, ...]:
        out = []
        for s in self.sources:
            out.append(
                PointSource(
                    location=SpherePoint.from_angles(float(s["theta"]), float(s["phi"])),
                    rate=float(s["rate"]),
                )
            )
        return tuple(out)

    def estimated_cost(self) -> float:
        per_config = [
            self.replicates * r * d for r in self.R_t_list for d in self.d_list
        ]
        return float(len(self.j_list) * sum(per_config))


RESULT_COLUMNS = (
    "B", "j", "R_t", "d", "replicates", "seed",
    "dw_empirical", "dw_stderr", "dw_bound_raw", "dw_bound_closed",
    "d2_lower", "d2_stderr", "d2_bound_fixed", "d2_bound_growing",
    "max_offdiag_cov", "cov_bound_max", "eff_sample_size",
)


@dataclass(frozen=True)
class ResultRow:
    B: float
    j: int
    R_t: float
    d: int
    replicates: int
    seed: int
    dw_empirical: float
    dw_stderr: float
    dw_bound_raw: float
    dw_bound_closed: float
    d2_lower: float
    d2_stderr: float
    d2_bound_fixed: float
    d2_bound_growing: float
    max_offdiag_cov: float
    cov_bound_max: float
    eff_sample_size: float

    def to_csv(self) -> str:
        parts = []
        for name in RESULT_COLUMNS:
            v = getattr(self, name)
            parts.append(f"{v:.17g}" if isinstance(v, float) else str(v))
        return ",".join(parts)


@dataclass
class ResultTable:
    rows: list

    def to_csv(self) -> str:
        lines = [",".join(RESULT_COLUMNS)]
        lines.extend(row.to_csv() for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            [{c: getattr(r, c) for c in RESULT_COLUMNS} for r in self.rows],
            indent=2,
        )


def run_sweep(
    config: ExperimentConfig,
    frame: NeedletFrame | None = None,
    constants: BoundConstants | None = None,
) -> ResultTable:
    """Run every (j, R_t, d) configuration and assemble the result table.

    Deterministic for a fixed base_seed: configuration i owns the seed block
    base_seed + i * CONFIG_SEED_STRIDE regardless of thread count; rows come
    back ordered by configuration index.
    """
    config.validate()
    cost = config.estimated_cost()
    if cost > config.cost_ceiling:
        raise ValidationError(
            f"estimated cost {cost:.3g} point-evaluations exceeds ceiling "
            f"{config.cost_ceiling:.3g}; shrink replicates or the grid"
        )
    density = config.build_density()
    sources = config.build_sources()
    if frame is None:
        frame = build_frame(config.B, max(config.j_list))
    if constants is None:
        constants = fit_bound_constants(frame, density, tau=config.tau)

    combos = [
        (j, r, d) for j in config.j_list for r in config.R_t_list for d in config.d_list
    ]

    def one(index_combo) -> ResultRow:
        index, (j, R_t, d) = index_combo
        seed = config.base_seed + index * CONFIG_SEED_STRIDE
        sel = select_centers(frame, j, d)
        batch = simulate_coeff_batch(
            frame, density, sel, R_t, config.replicates, seed, sources=sources
        )
        dw_vals = [empirical_wasserstein_1d(batch[:, c], seed=seed + 1) for c in range(d)]
        worst = max(range(d), key=lambda c: dw_vals[c].value)
        cov = covariance_exact(frame, density, sel, R_t)
        dictionary = build_dictionary(d)
        d2 = empirical_d2_lower(batch, np.eye(d), dictionary, seed=seed + 2)
        report = compute_bound_report(frame, density, sel, R_t, constants)
        # every component obeys its own one-dimensional bound; the row keeps
        # the worst empirical component against the worst bound
        raw_max, closed_max = report.dw_bound_raw, report.dw_bound_closed
        if d > 1:
            from .bounds import dw_bound

            for c in range(1, d):
                r_c, c_c = dw_bound(
                    frame, density, j, int(sel.indices[c]), R_t, constants.q3_prime
                )
                raw_max, closed_max = max(raw_max, r_c), max(closed_max, c_c)
        return ResultRow(
            B=config.B,
            j=j,
            R_t=float(R_t),
            d=d,
            replicates=config.replicates,
            seed=seed,
            dw_empirical=dw_vals[worst].value,
            dw_stderr=dw_vals[worst].std_error,
            dw_bound_raw=raw_max,
            dw_bound_closed=closed_max,
            d2_lower=d2.value,
            d2_stderr=d2.std_error,
            d2_bound_fixed=report.d2_bound_fixed,
            d2_bound_growing=report.d2_bound_growing,
            max_offdiag_cov=cov.max_offdiag(),
            cov_bound_max=report.cov_bound_max,
            eff_sample_size=report.effective_sample_size,
        )

    indexed = list(enumerate(combos))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(one, indexed))
    else:
        rows = [one(ic) for ic in indexed]
    return ResultTable(rows=rows)


def emit_report(table: ResultTable, out_dir: str, fmt: str) -> list[str]:
    """Write the table as sweep.csv / sweep.json / sweep.svg; returns paths."""
    if not table.rows:
        raise ValidationError("refusing to write an empty result table")
    if fmt not in ("csv", "json", "svg"):
        raise ValidationError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"sweep.{fmt}")
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(table.to_csv())
    elif fmt == "json":
        with open(path, "w") as fh:
            fh.write(table.to_json())
            fh.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(render_sweep_svg(table))
    return [path]


def render_sweep_svg(table: ResultTable, width: int = 720, height: int = 480) -> str:
    """Minimal hand-rolled log-log plot: one polyline per (j, curve kind)."""
    margin = 60
    series: dict[tuple[int, str], list[tuple[float, float]]] = {}
    for row in table.rows:
        for kind, val in (
            ("dw_empirical", row.dw_empirical),
            ("dw_bound_raw", row.dw_bound_raw),
            ("d2_lower", row.d2_lower),
            ("d2_bound_growing", row.d2_bound_growing),
        ):
            if val > 0:
                series.setdefault((row.j, kind), []).append((row.R_t, val))
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ValidationError("nothing to plot")
    lx0, lx1 = math.log10(min(xs)), math.log10(max(xs))
    ly0, ly1 = math.log10(min(ys)), math.log10(max(ys))
    lx1 = lx1 if lx1 > lx0 else lx0 + 1.0
    ly1 = ly1 if ly1 > ly0 else ly0 + 1.0

    def sx(x):
        return margin + (math.log10(x) - lx0) / (lx1 - lx0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (math.log10(y) - ly0) / (ly1 - ly0) * (height - 2 * margin)

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
    ]
    for tick in range(int(math.floor(lx0)), int(math.ceil(lx1)) + 1):
        if lx0 <= tick <= lx1:
            x = sx(10.0**tick)
            parts.append(
                f'<line x1="{x:.1f}" y1="{height - margin}" x2="{x:.1f}" '
                f'y2="{height - margin + 6}" stroke="black"/>'
            )
            parts.append(
                f'<text x="{x:.1f}" y="{height - margin + 20}" font-size="11" '
                f'text-anchor="middle">1e{tick}</text>'
            )
    for tick in range(int(math.floor(ly0)), int(math.ceil(ly1)) + 1):
        if ly0 <= tick <= ly1:
            y = sy(10.0**tick)
            parts.append(
                f'<line x1="{margin - 6}" y1="{y:.1f}" x2="{margin}" y2="{y:.1f}" stroke="black"/>'
            )
            parts.append(
                f'<text x="{margin - 10}" y="{y + 4:.1f}" font-size="11" '
                f'text-anchor="end">1e{tick}</text>'
            )
    for i, ((j, kind), pts) in enumerate(sorted(series.items())):
        pts = sorted(pts)
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        color = palette[i % len(palette)]
        dash = ' stroke-dasharray="6,4"' if "bound" in kind else ""
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}"{dash} stroke-width="1.6"/>'
        )
        x_last, y_last = pts[-1]
        parts.append(
            f'<text x="{sx(x_last) + 4:.1f}" y="{sy(y_last):.1f}" font-size="10" '
            f'fill="{color}">j={j} {kind}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def demo_threshold_density(
    frame: NeedletFrame,
    density: SphereDensity,
    n_list,
    replicates: int = 50,
    base_seed: int = 31337,
    j_max: int | None = None,
    threshold_c: float = 1.0,
) -> list[dict]:
    """Thresholding density estimation risk table.

    For each sample size n: draw n i.i.d. points, form empirical needlet
    coefficients, hard-threshold detail scales (j >= 2) at
    threshold_c * sqrt(log n / n), reconstruct, and record the L2 risk
    against the true density by quadrature.  Scales j <= 1 and the mean are
    always kept.
    """
    if density.harmonic_degree is None:
        raise ValidationError("threshold demo needs a bandlimited density")
    j_top = min(j_max if j_max is not None else frame.j_max, frame.j_max)
    scales = [j for j in sorted(frame.scales) if j <= j_top]
    risk_grid = build_quadrature(
        max(2 * frame.scale(j_top).l_max, 2 * density.harmonic_degree) + 2
    )
    f_true = density(risk_grid.xyz)
    rows = []
    for n in n_list:
        n = int(n)
        t_n = math.sqrt(math.log(n) / n)
        risks = np.empty(replicates)
        kept = np.zeros(replicates)
        for r in range(replicates):
            rng = rng_for(base_seed + r)
            pts = sample_density_points(density, n, rng)
            coeffs = {}
            for j in scales:
                sc = frame.scale(j)
                dots = np.clip(pts @ sc.centers.T, -1.0, 1.0)
                gvals = profile(frame, j, dots.ravel()).reshape(dots.shape)
                beta_hat = np.sqrt(sc.weights) * gvals.mean(axis=0)
                if j >= 2 and math.isfinite(threshold_c):
                    beta_hat = np.where(
                        np.abs(beta_hat) >= threshold_c * t_n, beta_hat, 0.0
                    )
                elif j >= 2:
                    beta_hat = np.zeros_like(beta_hat)
                coeffs[j] = beta_hat
            kept[r] = sum(int(np.count_nonzero(b)) for j, b in coeffs.items() if j >= 2)
            est = NeedletCoefficients(B=frame.B, average=1.0 / FOUR_PI, betas=coeffs)
            f_hat = synthesize(frame, est, risk_grid.xyz)
            risks[r] = float(np.dot(risk_grid.weights, (f_hat - f_true) ** 2))
        rows.append(
            {
                "n": n,
                "threshold": threshold_c * t_n,
                "risk_mean": float(risks.mean()),
                "risk_se": float(risks.std(ddof=1) / math.sqrt(replicates)),
                "kept_detail_coeffs": float(kept.mean()),
            }
        )
    return rows


def demo_point_source_test(
    frame: NeedletFrame,
    density: SphereDensity,
    j: int,
    d: int,
    R_t: float,
    level: float,
    source_rates,
    replicates: int = 2000,
    base_seed: int = 271828,
    gaussian_draws: int = 100_000,
) -> list[dict]:
    """Size/power table for the max-|coefficient| point-source test.

    The critical value is the (1 - level) quantile of max_k |Z_k| under
    Z ~ N(0, Gamma_exact), computed by Monte Carlo on the Gaussian side.
    Each alternative re-runs the same seeds with one source of the given
    rate placed at the first selected center.
    """
    if not 0.0 < level < 1.0:
        raise ValidationError("level must be in (0, 1)")
    sel = select_centers(frame, j, d)
    gamma = covariance_exact(frame, density, sel, R_t).matrix
    rng = rng_for(base_seed ^ 0xC0FFEE)
    chol = np.linalg.cholesky(gamma + 1e-12 * np.eye(d))
    z = rng.standard_normal((gaussian_draws, d)) @ chol.T
    t_null = np.max(np.abs(z), axis=1)
    crit = float(np.quantile(t_null, 1.0 - level))
    loc = SpherePoint(*frame.scale(j).centers[int(sel.indices[0])])
    rows = []
    for rate in source_rates:
        sources = (PointSource(location=loc, rate=float(rate)),) if rate > 0 else ()
        batch = simulate_coeff_batch(
            frame, density, sel, R_t, replicates, base_seed, sources=sources
        )
        stat = np.max(np.abs(batch), axis=1)
        reject = float((stat > crit).mean())
        rows.append(
            {
                "source_rate": float(rate),
                "critical_value": crit,
                "reject_rate": reject,
                "reject_se": math.sqrt(max(reject * (1 - reject), 1e-12) / replicates),
            }
        )
    return rows
