"""Port selection, residual self-interference and rate evaluation.

Functions operate on the last axis (ports) and broadcast over any leading
trial axes. Ratios with a zero forward gain are ``+inf`` and never selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import WidebandRealization
from .rng import complex_normal


@dataclass(frozen=True)
class SimParams:
    e_s: float = 1.0
    e_si: float = 1.0
    kappa_y: float = 1000.0
    sigma_eta2: float = 1.0
    bw_hz: float = 5e6
    sigma_g2: float = 1.0
    capacity_cap: float = math.inf

    def __post_init__(self):
        for name in ("e_s", "e_si", "kappa_y", "bw_hz", "sigma_g2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.sigma_eta2 >= 0:
            raise ValueError(f"sigma_eta2 must be nonnegative, got {self.sigma_eta2}")

    @classmethod
    def from_db(cls, kappa_db: float = 30.0, **kw) -> "SimParams":
        return cls(kappa_y=10.0 ** (kappa_db / 10.0), **kw)

    @property
    def kappa_e(self) -> float:
        """kappa_y * E_SI, the mean SI power with no cancellation."""
        return self.kappa_y * self.e_si

    @property
    def sigma_g(self) -> float:
        return math.sqrt(self.sigma_g2)


@dataclass(frozen=True)
class SelectionResult:
    port: int
    ratio: float
    rsi_power: float
    capacity_bits: float


@dataclass(frozen=True)
class PilotConfig:
    """``l_e`` pilots per link direction inside a coherence block of ``l_c`` symbols."""

    l_e: int
    l_c: int = 5_000_000

    def __post_init__(self):
        if self.l_e < 0 or self.l_c < 1 or 2 * self.l_e > self.l_c:
            raise ValueError(f"need 0 <= 2*l_e <= l_c, got l_e={self.l_e}, l_c={self.l_c}")

    def pilots_per_port(self, n_ports: int) -> int:
        return self.l_e // n_ports

    @property
    def overhead_factor(self) -> float:
        return 1.0 - 2.0 * self.l_e / self.l_c


def port_ratios(g_d, g_si) -> np.ndarray:
    """``|g_si|^2 / |g_d|^2`` per port, ``inf`` where the forward gain vanishes."""
    num = np.abs(g_si) ** 2
    den = np.abs(g_d) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    r[den == 0] = np.inf
    return r


def rsi_power_per_port(g_d, g_si, params: SimParams) -> np.ndarray:
    g_d, g_si = np.asarray(g_d), np.asarray(g_si)
    if g_d.shape != g_si.shape:
        raise ValueError(f"shape mismatch {g_d.shape} vs {g_si.shape}")
    return params.kappa_e * port_ratios(g_d, g_si)


def select_min_rsi(g_d, g_si):
    """Port minimising the loopback-to-forward power ratio, and that ratio.

    Batched inputs return arrays of ports and ratios.
    """
    r = port_ratios(np.asarray(g_d), np.asarray(g_si))
    if r.shape[-1] == 0:
        raise ValueError("need at least one port")
    port = np.argmin(r, axis=-1)
    ratio = np.take_along_axis(r, port[..., None], axis=-1)[..., 0]
    if port.ndim == 0:
        return int(port), float(ratio)
    return port, ratio


def select_max_forward(g_d):
    """Port with the strongest forward gain (the SI-blind baseline)."""
    p = np.abs(np.asarray(g_d)) ** 2
    if p.shape[-1] == 0:
        raise ValueError("need at least one port")
    port = np.argmax(p, axis=-1)
    return int(port) if port.ndim == 0 else port


def capacity_narrowband(ratio, params: SimParams):
    """Forward capacity ``log2(1 + E_s / (kappa_y E_SI R))`` in bit/s/Hz."""
    r = np.asarray(ratio, dtype=float)
    if np.any(r < 0):
        raise ValueError("ratio must be nonnegative")
    with np.errstate(divide="ignore"):
        c = np.log2(1.0 + params.e_s / (params.kappa_e * r))
    c = np.where(r == 0, params.capacity_cap, c)
    return float(c) if c.ndim == 0 else c


def min_rsi_selection(g_d, g_si, params: SimParams) -> SelectionResult:
    port, ratio = select_min_rsi(g_d, g_si)
    return SelectionResult(port, ratio, params.kappa_e * ratio, capacity_narrowband(ratio, params))


def _mean_last(x: np.ndarray) -> np.ndarray:
    # shifted mean: exact when all entries are equal (flat fading)
    x0 = x[..., :1]
    with np.errstate(invalid="ignore"):
        d = x - x0
    d[np.isnan(d)] = 0.0
    return x0[..., 0] + d.mean(axis=-1)


def subcarrier_ratios(wide: WidebandRealization) -> np.ndarray:
    return port_ratios(wide.g_d, wide.g_si)


def wideband_rsi_per_port(wide: WidebandRealization, params: SimParams) -> np.ndarray:
    """Subcarrier-averaged RSI power per port, shape ``(..., N)``."""
    return params.kappa_e * _mean_last(subcarrier_ratios(wide))


@dataclass(frozen=True)
class WidebandSelection:
    port: np.ndarray | int
    rsi_power: np.ndarray | float
    spectral_efficiency: np.ndarray | float
    rate_bps: np.ndarray | float


def wideband_port_metrics(wide: WidebandRealization, port, params: SimParams) -> WidebandSelection:
    """RSI power and forward rate at a given (per-trial) port."""
    sub = subcarrier_ratios(wide)
    port_arr = np.asarray(port)
    sel = np.take_along_axis(sub, port_arr[..., None, None], axis=-2)[..., 0, :]
    rsi = params.kappa_e * _mean_last(sel)
    se = _mean_last(capacity_narrowband(sel, params))
    if port_arr.ndim == 0:
        return WidebandSelection(int(port_arr), float(rsi), float(se), float(params.bw_hz * se))
    return WidebandSelection(port_arr, rsi, se, params.bw_hz * se)


def select_wideband(wide: WidebandRealization, params: SimParams) -> WidebandSelection:
    """Pick the port with the lowest subcarrier-averaged RSI; report its RSI and rate."""
    port = np.argmin(_mean_last(subcarrier_ratios(wide)), axis=-1)
    return wideband_port_metrics(wide, port, params)


def lmmse_estimate(g, pilots_per_port, params: SimParams, rng: np.random.Generator,
                   pilot_power: float | None = None) -> np.ndarray:
    """Per-port scalar LMMSE estimate from ``pilots_per_port`` noisy pilot observations.

    The averaged observation is ``g + eps`` with ``eps ~ CN(0, sigma_eta2/(L_p E_p))``;
    the estimate shrinks it by ``sigma_g2 L_p E_p / (sigma_g2 L_p E_p + sigma_eta2)``.
    The noise draw is always consumed so estimates at different pilot counts
    share random numbers.
    """
    g = np.asarray(g)
    lp = np.asarray(pilots_per_port, dtype=float)
    if np.any(lp < 0):
        raise ValueError("pilots_per_port must be nonnegative")
    e_p = params.e_s if pilot_power is None else pilot_power
    noise = complex_normal(rng, g.shape)
    snr = params.sigma_g2 * lp * e_p
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(lp > 0, snr / (snr + params.sigma_eta2), 0.0)
        eps_std = np.where(lp > 0, np.sqrt(params.sigma_eta2 / np.where(lp > 0, lp * e_p, 1.0)), 0.0)
    return gain * (g + eps_std * noise)


def capacity_with_overhead(c, pilot: PilotConfig):
    return pilot.overhead_factor * np.asarray(c) if np.ndim(c) else pilot.overhead_factor * c
