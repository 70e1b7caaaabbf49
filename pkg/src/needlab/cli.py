"""Command-line interface.

Subcommands: frame-check (window/cubature/localization audit), sweep (the
main experiment), bounds (bound reports only, no simulation), demo-threshold
and demo-sources.  Exit codes: 0 success, 2 validation error, 3 numerical
non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .bounds import compute_bound_report, fit_bound_constants
from .coeffs import select_centers
from .errors import ConvergenceError, ValidationError
from .experiments import (
    ExperimentConfig,
    demo_point_source_test,
    demo_threshold_density,
    emit_report,
    run_sweep,
)
from .frame import build_frame, fit_localization, write_frame_diagnostics
from .window import PARTITION_TOL


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config path")
    parser.add_argument("--out", type=str, default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override base seed")
    parser.add_argument(
        "--format", choices=("csv", "json", "svg"), default="csv", help="report format"
    )
    parser.add_argument("--threads", type=int, default=1, help="parallel configurations")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.threads:
        cfg.threads = args.threads
    cfg.out_dir = args.out
    return cfg


def cmd_frame_check(args) -> int:
    cfg = _load_config(args)
    frame = build_frame(cfg.B, max(cfg.j_list))
    window = frame.window
    probe = np.linspace(1.0, cfg.B**5, 200)
    residual = float(np.max(np.abs(window.squared_sum(probe) - 1.0)))
    outside = float(abs(window(cfg.B * 1.001)) + abs(window(1.0 / cfg.B * 0.999)))
    loc = fit_localization(frame, int(cfg.tau))
    os.makedirs(cfg.out_dir, exist_ok=True)
    diag_path = os.path.join(cfg.out_dir, "frame_diagnostics.json")
    write_frame_diagnostics(frame, diag_path)
    summary = {
        "partition_residual": residual,
        "partition_tolerance": PARTITION_TOL,
        "support_leak": outside,
        "localization_kappa_hat": loc.kappa_hat,
        "localization_by_scale": loc.max_ratio_by_scale,
        "diagnostics_file": diag_path,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if residual < PARTITION_TOL and outside == 0.0 else 3


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    table = run_sweep(cfg)
    paths = emit_report(table, cfg.out_dir, args.format)
    for p in paths:
        print(p)
    return 0


def cmd_bounds(args) -> int:
    cfg = _load_config(args)
    density = cfg.build_density()
    frame = build_frame(cfg.B, max(cfg.j_list))
    constants = fit_bound_constants(frame, density, tau=cfg.tau)
    reports = []
    for j in cfg.j_list:
        for d in cfg.d_list:
            sel = select_centers(frame, j, d)
            for r_t in cfg.R_t_list:
                reports.append(compute_bound_report(frame, density, sel, r_t, constants))
    os.makedirs(cfg.out_dir, exist_ok=True)
    if args.format == "json":
        path = os.path.join(cfg.out_dir, "bounds.json")
        with open(path, "w") as fh:
            json.dump([r.to_json_dict() for r in reports], fh, indent=2)
            fh.write("\n")
    else:
        path = os.path.join(cfg.out_dir, "bounds.csv")
        with open(path, "w") as fh:
            fh.write(",".join(reports[0].CSV_FIELDS) + "\n")
            for r in reports:
                fh.write(r.to_csv_row() + "\n")
    print(path)
    return 0


def cmd_demo_threshold(args) -> int:
    cfg = _load_config(args)
    density = cfg.build_density()
    frame = build_frame(cfg.B, max(cfg.j_list))
    n_list = args.n or [1000, 10000]
    rows = demo_threshold_density(
        frame,
        density,
        n_list,
        replicates=args.replicates,
        base_seed=cfg.base_seed,
        j_max=max(cfg.j_list),
        threshold_c=args.threshold_c,
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "threshold_risk.json")
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    print(json.dumps(rows, indent=2))
    print(path)
    return 0


def cmd_demo_sources(args) -> int:
    cfg = _load_config(args)
    density = cfg.build_density()
    frame = build_frame(cfg.B, max(cfg.j_list))
    j = cfg.j_list[0]
    d = cfg.d_list[0]
    r_t = float(cfg.R_t_list[0])
    b_j = cfg.B**j
    rates = args.rates or [0.0, 5.0 * math.sqrt(r_t) / b_j, 20.0 * math.sqrt(r_t) / b_j]
    rows = demo_point_source_test(
        frame,
        density,
        j,
        d,
        r_t,
        level=args.level,
        source_rates=rates,
        replicates=cfg.replicates,
        base_seed=cfg.base_seed,
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "source_test.json")
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    print(json.dumps(rows, indent=2))
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="needlab",
        description="Needlet frames over spherical Poisson fields: sweeps, bounds, demos.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("frame-check", help="window, cubature and localization audit")
    _add_common(p)
    p.set_defaults(func=cmd_frame_check)

    p = sub.add_parser("sweep", help="replicated simulation sweep with bound comparison")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="bound reports only, no simulation")
    _add_common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("demo-threshold", help="thresholding density estimation demo")
    _add_common(p)
    p.add_argument("--n", type=int, nargs="*", default=None, help="sample sizes")
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--threshold-c", type=float, default=1.0, dest="threshold_c")
    p.set_defaults(func=cmd_demo_threshold)

    p = sub.add_parser("demo-sources", help="point-source detection size/power demo")
    _add_common(p)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--rates", type=float, nargs="*", default=None)
    p.set_defaults(func=cmd_demo_sources)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
