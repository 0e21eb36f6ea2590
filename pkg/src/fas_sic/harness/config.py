"""Experiment configuration: dataclasses plus a TOML loader.

A config names one channel scenario, a list of port grids, the schemes to
compare and optional sweep axes (``k_factor``, ``n_paths``, ``l_e``, ``m``).
Every combination of sweep values is a *variant*; each (variant, grid) pair
is one report cell.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import tomli

from ..analysis import ApproxConfig
from ..channels import FiniteScatterParams, TapProfile
from ..geometry import FasGrid
from ..sic import PilotConfig, SimParams

SCENARIOS = ("rich", "truncated", "finite_scatter", "wideband_iab")
SCHEMES = ("fas_min_rsi", "fas_max_forward", "fpa")
SWEEP_KEYS = ("k_factor", "n_paths", "l_e", "m")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    grids: tuple[FasGrid, ...]
    sim: SimParams = field(default_factory=lambda: SimParams.from_db(30.0))
    trials: int = 10_000
    seed: int = 0
    schemes: tuple[str, ...] = ("fas_min_rsi",)
    name: str = "experiment"
    m: int | None = None
    finite_scatter: FiniteScatterParams | None = None
    tap_profile: TapProfile | None = None
    pilot: PilotConfig | None = None
    approx: ApproxConfig | None = None
    sweep: tuple[tuple[str, tuple[Any, ...]], ...] = ()
    cdf_points: tuple[float, ...] = ()
    fpa_mode: str = "shared"
    block_size: int | None = None
    keep_samples: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.grids:
            raise ConfigError("at least one grid is required")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.fpa_mode not in ("shared", "independent"):
            raise ConfigError(f"fpa_mode must be 'shared' or 'independent', got {self.fpa_mode!r}")
        if self.block_size is not None and self.block_size < 1:
            raise ConfigError("block_size must be positive")
        sweep_keys = {k for k, _ in self.sweep}
        for k, values in self.sweep:
            if k not in SWEEP_KEYS:
                raise ConfigError(f"cannot sweep {k!r}; sweepable keys are {SWEEP_KEYS}")
            if not values:
                raise ConfigError(f"sweep over {k!r} is empty")
        if self.scenario == "truncated" and self.m is None and "m" not in sweep_keys:
            raise ConfigError("the truncated scenario needs a truncation order m")
        if self.scenario == "finite_scatter" and self.finite_scatter is None:
            raise ConfigError("the finite_scatter scenario needs a [finite_scatter] table")
        if self.scenario == "wideband_iab" and self.tap_profile is None:
            raise ConfigError("the wideband_iab scenario needs a [wideband] table")
        if "l_e" in sweep_keys and self.pilot is None:
            raise ConfigError("sweeping l_e needs a [pilot] table")
        if self.pilot is not None and self.scenario == "wideband_iab":
            raise ConfigError("pilot estimation is only modelled for narrowband scenarios")
        if any(p < 0 for p in self.cdf_points) or list(self.cdf_points) != sorted(self.cdf_points):
            raise ConfigError("cdf_points must be nonnegative and sorted")

    @property
    def effective_block_size(self) -> int:
        if self.block_size is not None:
            return self.block_size
        return 16 if self.scenario == "wideband_iab" else 256

    def variants(self) -> list["Variant"]:
        """Cartesian product of the sweep axes, in declaration order."""
        if not self.sweep:
            return [Variant(self, ())]
        keys = [k for k, _ in self.sweep]
        return [Variant(self, tuple(zip(keys, combo)))
                for combo in itertools.product(*(v for _, v in self.sweep))]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grids"] = [asdict(g) for g in self.grids]
        d["sweep"] = {k: list(v) for k, v in self.sweep}
        return _finite(d)


@dataclass(frozen=True)
class Variant:
    """One point of the sweep, with overrides applied to the base config."""

    base: ExperimentConfig
    overrides: tuple[tuple[str, Any], ...]

    @property
    def label(self) -> str:
        if not self.overrides:
            return self.base.scenario
        return self.base.scenario + "/" + ",".join(f"{k}={v}" for k, v in self.overrides)

    def value(self, key: str, default=None):
        return dict(self.overrides).get(key, default)

    @property
    def m(self) -> int | None:
        return self.value("m", self.base.m)

    @property
    def finite_scatter(self) -> FiniteScatterParams | None:
        fs = self.base.finite_scatter
        if fs is None:
            return None
        kw = {k: v for k, v in self.overrides if k in ("k_factor", "n_paths")}
        return replace(fs, **kw) if kw else fs

    @property
    def tap_profile(self) -> TapProfile | None:
        tp = self.base.tap_profile
        if tp is not None and "k_factor" in dict(self.overrides):
            return replace(tp, k_factor_tap0=self.value("k_factor"))
        return tp

    @property
    def pilot(self) -> PilotConfig | None:
        p = self.base.pilot
        if p is not None and "l_e" in dict(self.overrides):
            return replace(p, l_e=int(self.value("l_e")))
        return p


def _finite(obj):
    # JSON has no infinity; spell it out
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _grid_entries(doc: dict) -> list[FasGrid]:
    grids = []
    for entry in doc.get("grid", []):
        n1, n2 = entry.get("n", (entry.get("n1"), entry.get("n2")))
        w1, w2 = entry.get("w", (entry.get("w1"), entry.get("w2")))
        if None in (n1, n2, w1, w2):
            raise ConfigError(f"grid entry {entry} needs n = [n1, n2] and w = [w1, w2]")
        grids.append(FasGrid(int(n1), int(n2), float(w1), float(w2)))
    product = doc.get("grid_product")
    if product is not None:
        for (n1, n2), (w1, w2) in itertools.product(product["n"], product["w"]):
            grids.append(FasGrid(int(n1), int(n2), float(w1), float(w2)))
    return grids


def _table(doc: dict, key: str, cls, allowed: tuple[str, ...]):
    tab = doc.get(key)
    if tab is None:
        return None
    unknown = set(tab) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{key}]: {sorted(unknown)}")
    try:
        return cls(**tab)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{key}] table: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    known = {"name", "scenario", "trials", "seed", "schemes", "m", "cdf_points", "fpa_mode",
             "block_size", "keep_samples", "grid", "grid_product", "sim", "finite_scatter",
             "wideband", "pilot", "approx", "sweep"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "scenario" not in doc:
        raise ConfigError("config must set scenario")

    sim_doc = dict(doc.get("sim", {}))
    kappa_db = sim_doc.pop("kappa_db", None)
    try:
        if "kappa_y" in sim_doc:
            if kappa_db is not None:
                raise ConfigError("[sim] sets both kappa_y and kappa_db")
            sim = SimParams(**sim_doc)
        else:
            sim = SimParams.from_db(30.0 if kappa_db is None else kappa_db, **sim_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [sim] table: {exc}") from exc

    fs = _table(doc, "finite_scatter", FiniteScatterParams,
                ("k_factor", "n_paths", "sigma_g2", "angle_model", "redraw_angles"))
    wide = doc.get("wideband")
    tap = None
    if wide is not None:
        wide = dict(wide)
        if wide.pop("profile", None) == "iab" or not wide.get("powers_db"):
            base = TapProfile.iab()
            wide = {**asdict(base), **wide}
        tap = _table({"wideband": wide}, "wideband", TapProfile,
                     ("powers_db", "delays_us", "sample_rate_hz", "fft_size", "k_factor_tap0"))
    pilot = _table(doc, "pilot", PilotConfig, ("l_e", "l_c"))
    approx_doc = doc.get("approx")
    if approx_doc is not None and "r_grid" in approx_doc:
        approx_doc = {**approx_doc, "r_grid": tuple(approx_doc["r_grid"])}
    approx = _table({"approx": approx_doc} if approx_doc is not None else {}, "approx", ApproxConfig,
                    tuple(ApproxConfig.__dataclass_fields__))
    sweep = tuple((k, tuple(v)) for k, v in doc.get("sweep", {}).items())

    try:
        return ExperimentConfig(
            scenario=doc["scenario"],
            grids=tuple(_grid_entries(doc)),
            sim=sim,
            trials=int(doc.get("trials", 10_000)),
            seed=int(doc.get("seed", 0)),
            schemes=tuple(doc.get("schemes", ("fas_min_rsi",))),
            name=str(doc.get("name", "experiment")),
            m=doc.get("m"),
            finite_scatter=fs,
            tap_profile=tap,
            pilot=pilot,
            approx=approx,
            sweep=sweep,
            cdf_points=tuple(float(x) for x in doc.get("cdf_points", ())),
            fpa_mode=doc.get("fpa_mode", "shared"),
            block_size=doc.get("block_size"),
            keep_samples=bool(doc.get("keep_samples", False)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc)
