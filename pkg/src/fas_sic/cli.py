"""Command line entry point: ``fas-sic {run,bounds,approx,cdf}``."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .analysis import ApproxConfig, TailBoundError, approx_cdf, approx_mean_rsi, cdf_lower_R, rsi_lower_bound
from .geometry import cached_grid_basis
from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.experiment import run_experiment
from .harness.report import CellError, CellResult, RsiReport, write_outputs
from .rng import substream

DEFAULT_CDF_POINTS = tuple(float(x) for x in np.geomspace(1e-4, 10.0, 26))


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.trials is not None:
        kw["trials"] = args.trials
    return replace(cfg, **kw) if kw else cfg


def _manifest(cfg: ExperimentConfig, command: str, threads: int) -> dict:
    return {"command": command, "version": __version__, "config": cfg.to_dict()}


def _print_summary(report: RsiReport, out=sys.stdout) -> None:
    for r in report.rows:
        if r.metric in ("rsi_mean_db", "cancellation_db", "rsi_lower_bound_db"):
            se = "" if r.stderr is None else f" +- {r.stderr:.3f}"
            print(f"{r.scenario:<28} {r.n1}x{r.n2} W={r.w1:g}x{r.w2:g} {r.scheme:<16} "
                  f"{r.metric:<18} {r.value:9.3f}{se}", file=out)
    for e in report.errors:
        print(f"cell error: {e.scenario} {e.grid}: {e.message}", file=sys.stderr)


def cmd_run(args, cdf_mode: bool = False) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if cdf_mode and not cfg.cdf_points:
        cfg = replace(cfg, cdf_points=DEFAULT_CDF_POINTS)
    report = run_experiment(cfg, threads=args.threads, cache_dir=args.cache_dir)
    if cdf_mode:
        extra = []
        for grid in dict.fromkeys(cfg.grids):
            for p in cfg.cdf_points:
                extra.append(CellResult("uncorrelated_bound", grid.n1, grid.n2, grid.w1, grid.w2,
                                        "bound", f"cdf_R@{p!r}", cdf_lower_R(p, grid.n_ports),
                                        None, 0, cfg.seed))
        report = replace(report, rows=report.rows + tuple(extra))
    stem = cfg.name + ("_cdf" if cdf_mode else "")
    if args.out:
        csv_path, _ = write_outputs(report, args.out, stem, _manifest(cfg, "cdf" if cdf_mode else "run", args.threads))
        print(f"wrote {csv_path}")
    _print_summary(report)
    return 1 if report.errors else 0


def cmd_approx(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    acfg = cfg.approx or ApproxConfig(m=cfg.m or 7)
    if args.trials is not None:
        acfg = replace(acfg, outer_samples=args.trials)
    points = cfg.cdf_points or DEFAULT_CDF_POINTS
    kappa_e = cfg.sim.kappa_e
    rows, errors = [], []
    for grid in dict.fromkeys(cfg.grids):
        def row(scheme, metric, value, se=None, n=acfg.outer_samples):
            return CellResult("approx", grid.n1, grid.n2, grid.w1, grid.w2, scheme, metric,
                              float(value), se, n, cfg.seed)
        try:
            basis = cached_grid_basis(grid, args.cache_dir)
            g_acfg = replace(acfg, m=min(acfg.m, basis.n_ports))
            est = approx_mean_rsi(basis, g_acfg, kappa_e, substream(cfg.seed, 0, "approx"), cfg.sim.sigma_g2)
            cdf = approx_cdf(np.asarray(points), basis, g_acfg, substream(cfg.seed, 0, "approx"), cfg.sim.sigma_g2)
        except (ArithmeticError, ValueError) as exc:
            errors.append(CellError("approx", grid, f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(row("approx", "rsi_mean", est.value, est.stderr))
        rows.append(row("approx", "rsi_mean_db", 10 * math.log10(est.value),
                        10 / math.log(10) * est.stderr / est.value))
        for p, v, s in zip(points, cdf.value, cdf.stderr):
            rows.append(row("approx", f"cdf_R@{p!r}", v, float(s)))
        if grid.n_ports >= 2:
            lb = rsi_lower_bound(grid.n_ports, kappa_e)
            rows.append(row("bound", "rsi_lower_bound", lb, None, 0))
            rows.append(row("bound", "rsi_lower_bound_db", 10 * math.log10(lb), None, 0))
    report = RsiReport(tuple(rows), 10 * math.log10(kappa_e), tuple(errors))
    if args.out:
        csv_path, _ = write_outputs(report, args.out, cfg.name + "_approx", _manifest(cfg, "approx", args.threads))
        print(f"wrote {csv_path}")
    _print_summary(report)
    return 1 if errors else 0


def cmd_bounds(args) -> int:
    n, kappa_db = args.n_ports, args.kappa_db
    kappa_e = 10 ** (kappa_db / 10)
    try:
        lb = rsi_lower_bound(n, kappa_e)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"N = {n}, kappa = {kappa_db:g} dB")
    print(f"mean RSI lower bound: {lb:.6g} ({10 * math.log10(lb):.3f} dB), "
          f"cancellation <= {kappa_db - 10 * math.log10(lb):.3f} dB")
    rows = [CellResult("uncorrelated_bound", n, 1, 0.0, 0.0, "bound", "rsi_lower_bound", lb, None, 0, 0),
            CellResult("uncorrelated_bound", n, 1, 0.0, 0.0, "bound", "rsi_lower_bound_db",
                       10 * math.log10(lb), None, 0, 0)]
    for p in DEFAULT_CDF_POINTS:
        rows.append(CellResult("uncorrelated_bound", n, 1, 0.0, 0.0, "bound", f"cdf_R@{p!r}",
                               cdf_lower_R(p, n), None, 0, 0))
    if args.out:
        report = RsiReport(tuple(rows), kappa_db)
        manifest = {"command": "bounds", "version": __version__, "n_ports": n, "kappa_db": kappa_db}
        csv_path, _ = write_outputs(report, args.out, f"bounds_N{n}", manifest)
        print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--trials", type=int, help="override the trial count (outer samples for approx)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--out", help="directory for CSV and manifest output")
    common.add_argument("--cache-dir", help="directory for cached eigen-decompositions")

    p = argparse.ArgumentParser(prog="fas-sic", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "Monte Carlo sweep from a config file"),
                        ("approx", "eigen-mode approximation of the mean RSI and CDF"),
                        ("cdf", "empirical CDF of the minimum ratio with the uncorrelated bound")):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("config", help="TOML experiment config")
    bp = sub.add_parser("bounds", parents=[common], help="uncorrelated-port bound for N ports")
    bp.add_argument("n_ports", type=int)
    bp.add_argument("kappa_db", type=float)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "cdf":
            return cmd_run(args, cdf_mode=True)
        if args.command == "approx":
            return cmd_approx(args)
        return cmd_bounds(args)
    except (ConfigError, FileNotFoundError, TailBoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
