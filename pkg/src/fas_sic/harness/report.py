"""Aggregation of per-trial samples into report rows, and CSV/manifest I/O."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..geometry import FasGrid

FORMAT_LINE = "# fas_sic-report/1"
COLUMNS = ("scenario", "n1", "n2", "w1", "w2", "scheme", "metric", "value", "stderr", "trials", "seed")


class Summary(NamedTuple):
    mean: float
    median: float
    stderr: float
    p5: float
    p95: float


def summarize(samples) -> Summary:
    """Mean, median, standard error of the mean, 5th and 95th percentiles.

    The standard error is NaN for a single sample.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    p5, med, p95 = np.percentile(x, [5, 50, 95])
    return Summary(float(np.mean(x)), float(med), se, float(p5), float(p95))


def empirical_cdf(samples, grid_points) -> list[tuple[float, float]]:
    """Fraction of samples ``<= p`` for every grid point (right-continuous)."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("need at least one sample")
    pts = np.asarray(grid_points, dtype=float)
    if np.any(np.diff(pts) < 0):
        raise ValueError("grid points must be sorted")
    frac = np.searchsorted(x, pts, side="right") / x.size
    return [(float(p), float(f)) for p, f in zip(pts, frac)]


@dataclass(frozen=True)
class CellResult:
    scenario: str
    n1: int
    n2: int
    w1: float
    w2: float
    scheme: str
    metric: str
    value: float
    stderr: float | None
    trials: int
    seed: int

    def __eq__(self, other):
        # NaN compares equal to NaN here so that reparsed reports match
        if not isinstance(other, CellResult):
            return NotImplemented
        return all(_same(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__)

    __hash__ = None


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


@dataclass(frozen=True)
class CellError:
    scenario: str
    grid: FasGrid
    message: str


@dataclass(frozen=True)
class RsiReport:
    rows: tuple[CellResult, ...]
    reference_db: float
    errors: tuple[CellError, ...] = field(default=(), compare=False)
    samples: dict = field(default_factory=dict, compare=False, repr=False)

    def select(self, **match) -> list[CellResult]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def value(self, **match) -> float:
        hits = self.select(**match)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0].value

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{FORMAT_LINE} reference_db={self.reference_db!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.scenario, r.n1, r.n2, repr(r.w1), repr(r.w2), r.scheme, r.metric,
                        repr(r.value), "" if r.stderr is None else repr(r.stderr), r.trials, r.seed])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RsiReport":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(FORMAT_LINE):
            raise ValueError("missing or unsupported report header")
        ref = float(lines[0].split("reference_db=", 1)[1])
        reader = csv.reader(lines[1:])
        if tuple(next(reader)) != COLUMNS:
            raise ValueError("unexpected CSV columns")
        rows = []
        for rec in reader:
            sc, n1, n2, w1, w2, scheme, metric, value, se, trials, seed = rec
            rows.append(CellResult(sc, int(n1), int(n2), float(w1), float(w2), scheme, metric,
                                   float(value), None if se == "" else float(se), int(trials), int(seed)))
        return cls(tuple(rows), ref)


def _db(x: float) -> float:
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(x)) if x >= 0 else math.nan


def _mean_db(x: np.ndarray) -> tuple[float, float]:
    s = summarize(x)
    se = 10 / math.log(10) * s.stderr / s.mean if s.mean > 0 else math.nan
    return _db(s.mean), se


def cell_rows(scenario: str, grid: FasGrid, scheme: str, samples: dict[str, np.ndarray], cfg,
              baseline: dict[str, np.ndarray] | None = None) -> list[CellResult]:
    """Report rows for one (scenario, grid, scheme) cell from its per-trial samples.

    ``cancellation_db`` is measured from the kappa_y E_SI reference level;
    with a ``baseline`` (the fixed-antenna samples of the same trials)
    ``cancellation_vs_fpa_db`` is the gap between the two mean RSI levels.
    """
    n = samples["rsi"].size

    def row(metric, value, se=None):
        se = None if se is None or math.isnan(se) else float(se)
        return CellResult(scenario, grid.n1, grid.n2, grid.w1, grid.w2, scheme, metric,
                          float(value), se, n, cfg.seed)

    rsi = summarize(samples["rsi"])
    ref_db = _db(cfg.sim.kappa_e)
    mean_db, se_db = _mean_db(samples["rsi"])
    out = [
        row("rsi_mean", rsi.mean, rsi.stderr),
        row("rsi_mean_db", mean_db, se_db),
        row("rsi_median", rsi.median),
        row("rsi_median_db", _db(rsi.median)),
        row("rsi_p5", rsi.p5),
        row("rsi_p95", rsi.p95),
        row("cancellation_db", ref_db - mean_db, se_db),
    ]
    if baseline is not None:
        base_db, base_se = _mean_db(baseline["rsi"])
        out.append(row("cancellation_vs_fpa_db", base_db - mean_db, math.hypot(base_se, se_db)))
    for key in ("capacity", "capacity_ce", "spectral_efficiency", "rate"):
        if key in samples:
            s = summarize(samples[key])
            out.append(row(f"{key}_mean", s.mean, s.stderr))
    if cfg.cdf_points:
        ratio = samples["rsi"] / cfg.sim.kappa_e
        for p, f in empirical_cdf(ratio, cfg.cdf_points):
            out.append(row(f"cdf_R@{p!r}", f, math.sqrt(f * (1 - f) / n) if n > 1 else None))
    return out


def write_outputs(report: RsiReport, out_dir: str | Path, stem: str, manifest: dict) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.manifest.json``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    csv_path.write_text(report.to_csv())
    man = dict(manifest)
    man["csv"] = csv_path.name
    man["reference_db"] = report.reference_db
    man["cell_errors"] = [{"scenario": e.scenario, "grid": [e.grid.n1, e.grid.n2, e.grid.w1, e.grid.w2],
                           "message": e.message} for e in report.errors]
    man_path = out / f"{stem}.manifest.json"
    man_path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return csv_path, man_path
