"""Seeded Monte Carlo sweeps over grids, sweep variants and selection schemes.

Trials are processed in fixed-size blocks. Block ``b`` of every cell draws
from substreams keyed by ``(seed, b, role)``, so

* results do not depend on the number of worker threads,
* all schemes in a cell score the same channel draws, and
* cells with the same port count (and sweep variants that only rescale the
  draws, such as the Rice factor) see the same underlying random numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..channels import (
    WidebandRealization,
    draw_angles,
    sample_finite_scattering,
    sample_rich,
    sample_truncated,
    sample_wideband_link,
)
from ..geometry import EigenBasis, FasGrid, cached_grid_basis
from ..rng import substream
from ..sic import (
    capacity_narrowband,
    capacity_with_overhead,
    lmmse_estimate,
    port_ratios,
    wideband_port_metrics,
    wideband_rsi_per_port,
)
from .config import ExperimentConfig, Variant
from .report import CellError, RsiReport, cell_rows

_SINGLE = FasGrid(1, 1, 0.0, 0.0)


@dataclass
class _Cell:
    variant: Variant
    grid: FasGrid
    basis: EigenBasis
    fpa_basis: EigenBasis | None
    angles: tuple[np.ndarray, np.ndarray] | None


def _draw_narrowband(cell: _Cell, cfg: ExperimentConfig, grid: FasGrid, basis: EigenBasis,
                     rng_f, rng_l, count: int):
    sg = cfg.sim.sigma_g
    scen = cfg.scenario
    if scen == "truncated":
        m = min(cell.variant.m, basis.n_ports)
        return (sample_truncated(basis, m, sg, rng_f, count).g_hat,
                sample_truncated(basis, m, sg, rng_l, count).g_hat)
    g_d = sample_rich(basis, sg, rng_f, count)
    if scen == "rich":
        return g_d, sample_rich(basis, sg, rng_l, count)
    fs = cell.variant.finite_scatter
    return g_d, sample_finite_scattering(grid, fs, rng_l, count, angles=cell.angles)


def _draw_wideband(cell: _Cell, cfg: ExperimentConfig, basis: EigenBasis, rng_f, rng_l, count: int):
    prof = cell.variant.tap_profile
    sg = cfg.sim.sigma_g
    return WidebandRealization(sample_wideband_link(basis, prof, rng_f, 0.0, sg, count),
                               sample_wideband_link(basis, prof, rng_l, prof.k_factor_tap0, sg, count))


def _ports(scheme: str, sel_ratio: np.ndarray, forward_power: np.ndarray) -> np.ndarray:
    if scheme == "fas_min_rsi":
        return np.argmin(sel_ratio, axis=-1)
    if scheme == "fas_max_forward":
        return np.argmax(forward_power, axis=-1)
    return np.zeros(sel_ratio.shape[0], dtype=int)


def _run_block(cell: _Cell, cfg: ExperimentConfig, block: int, count: int) -> dict[str, dict[str, np.ndarray]]:
    seed = cfg.seed
    rng_f = substream(seed, block, "forward")
    rng_l = substream(seed, block, "loopback")
    sim = cfg.sim
    out: dict[str, dict[str, np.ndarray]] = {}
    independent_fpa = cfg.fpa_mode == "independent" and "fpa" in cfg.schemes

    if cfg.scenario == "wideband_iab":
        wide = _draw_wideband(cell, cfg, cell.basis, rng_f, rng_l, count)
        port_mean = wideband_rsi_per_port(wide, sim)
        fwd = (np.abs(wide.g_d) ** 2).mean(axis=-1)
        for scheme in cfg.schemes:
            if scheme == "fpa" and independent_fpa:
                single = _draw_wideband(cell, cfg, cell.fpa_basis, substream(seed, block, "fpa_forward"),
                                        substream(seed, block, "fpa_loopback"), count)
                sel = wideband_port_metrics(single, np.zeros(count, dtype=int), sim)
            else:
                sel = wideband_port_metrics(wide, _ports(scheme, port_mean, fwd), sim)
            out[scheme] = {"rsi": sel.rsi_power, "spectral_efficiency": sel.spectral_efficiency,
                           "rate": sel.rate_bps}
        return out

    g_d, g_si = _draw_narrowband(cell, cfg, cell.grid, cell.basis, rng_f, rng_l, count)
    true_ratio = port_ratios(g_d, g_si)
    pilot = cell.variant.pilot
    if pilot is not None:
        lp = pilot.pilots_per_port(cell.basis.n_ports)
        est_d = lmmse_estimate(g_d, lp, sim, substream(seed, block, "pilot_forward"))
        est_si = lmmse_estimate(g_si, lp, sim, substream(seed, block, "pilot_loopback"))
        sel_ratio, fwd = port_ratios(est_d, est_si), np.abs(est_d) ** 2
    else:
        sel_ratio, fwd = true_ratio, np.abs(g_d) ** 2

    for scheme in cfg.schemes:
        if scheme == "fpa" and independent_fpa:
            s_d, s_si = _draw_narrowband(cell, cfg, _SINGLE, cell.fpa_basis,
                                         substream(seed, block, "fpa_forward"),
                                         substream(seed, block, "fpa_loopback"), count)
            ratio = port_ratios(s_d, s_si)[:, 0]
        else:
            port = _ports(scheme, sel_ratio, fwd)
            ratio = np.take_along_axis(true_ratio, port[:, None], axis=-1)[:, 0]
        cap = capacity_narrowband(ratio, sim)
        metrics = {"rsi": sim.kappa_e * ratio, "capacity": np.atleast_1d(cap)}
        if pilot is not None:
            metrics["capacity_ce"] = capacity_with_overhead(metrics["capacity"], pilot)
        out[scheme] = metrics
    return out


def _fixed_angles(cfg: ExperimentConfig, variant: Variant):
    fs = variant.finite_scatter
    if fs is None or fs.redraw_angles:
        return None
    return draw_angles(substream(cfg.seed, 0, "fixed_angles"), fs.n_paths, fs.angle_model)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, cache_dir=None) -> RsiReport:
    """Run every (variant, grid) cell for ``cfg.trials`` trials and aggregate the results."""
    bs = cfg.effective_block_size
    n_blocks = math.ceil(cfg.trials / bs)
    blocks = [(b, min(bs, cfg.trials - b * bs)) for b in range(n_blocks)]
    bases: dict[FasGrid, EigenBasis] = {}
    fpa_basis = cached_grid_basis(_SINGLE) if cfg.fpa_mode == "independent" else None

    rows, errors, samples = [], [], {}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for variant in cfg.variants():
            for grid in cfg.grids:
                try:
                    if grid not in bases:
                        bases[grid] = cached_grid_basis(grid, cache_dir)
                    cell = _Cell(variant, grid, bases[grid], fpa_basis, _fixed_angles(cfg, variant))
                    parts = list(pool.map(lambda bc: _run_block(cell, cfg, *bc), blocks))
                except (ArithmeticError, ValueError, MemoryError) as exc:
                    errors.append(CellError(variant.label, grid, f"{type(exc).__name__}: {exc}"))
                    continue
                merged = {scheme: {k: np.concatenate([p[scheme][k] for p in parts]) for k in parts[0][scheme]}
                          for scheme in cfg.schemes}
                for scheme in cfg.schemes:
                    rows.extend(cell_rows(variant.label, grid, scheme, merged[scheme], cfg,
                                          baseline=merged.get("fpa") if scheme != "fpa" else None))
                    if cfg.keep_samples:
                        samples[(variant.label, grid, scheme)] = merged[scheme]
    return RsiReport(tuple(rows), reference_db=10 * math.log10(cfg.sim.kappa_e),
                     errors=tuple(errors), samples=samples)
