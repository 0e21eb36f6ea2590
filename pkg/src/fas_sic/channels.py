"""Random channel generators for the forward and loopback links.

Samplers take an explicit ``numpy.random.Generator`` and an optional ``size``
(number of independent trials); batched outputs carry the trial axis first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import EigenBasis, FasGrid
from .rng import complex_normal

# 1 - captured power below this is treated as a fully captured port
RESIDUAL_FLOOR = 1e-9


def _shape(size, *tail):
    return tail if size is None else (size, *tail)


@dataclass
class TruncatedRealization:
    g_hat: np.ndarray
    a_coeffs: np.ndarray
    b_residual: np.ndarray


@dataclass(frozen=True)
class FiniteScatterParams:
    """Loopback finite-scattering model: one LOS ray plus ``n_paths`` scattered rays.

    ``angle_model`` picks the AoA law: ``"uniform"`` draws elevation uniform on
    [0, pi] and azimuth uniform on [0, 2 pi); ``"isotropic"`` uses a uniform
    direction on the sphere; ``"planar"`` keeps arrivals in the aperture plane.
    """

    k_factor: float
    n_paths: int
    sigma_g2: float = 1.0
    angle_model: str = "uniform"
    redraw_angles: bool = True

    def __post_init__(self):
        if not self.k_factor >= 0:
            raise ValueError(f"Rice factor must be nonnegative, got {self.k_factor}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError(f"n_paths must be a positive integer, got {self.n_paths}")
        if self.angle_model not in ("uniform", "isotropic", "planar"):
            raise ValueError(f"unknown angle model {self.angle_model!r}")

    @property
    def los_weight(self) -> float:
        """Fraction of power in the LOS ray, K/(K+1)."""
        return 1.0 if math.isinf(self.k_factor) else self.k_factor / (self.k_factor + 1.0)


def residual_weights(basis: EigenBasis, m: int) -> np.ndarray:
    """Per-port std of the completing term, ``sqrt(1 - sum_k lam_k mu_nk^2)``."""
    rest = 1.0 - basis.captured_power(min(m, basis.n_ports))
    rest[rest < RESIDUAL_FLOOR] = 0.0
    return np.sqrt(rest)


def sample_rich(basis: EigenBasis, sigma_g: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Correlated Rayleigh port gains ``sigma_g * U Lambda^1/2 a``."""
    a = complex_normal(rng, _shape(size, basis.n_ports))
    return sigma_g * (a @ basis.mixing(basis.n_ports).T)


def sample_truncated(basis: EigenBasis, m: int, sigma_g: float, rng: np.random.Generator,
                     size=None) -> TruncatedRealization:
    """Keep the ``m`` strongest modes and top up each port's variance with private noise."""
    n = basis.n_ports
    if not 1 <= m <= n:
        raise ValueError(f"truncation order must lie in [1, {n}], got {m}")
    a = complex_normal(rng, _shape(size, m))
    b = complex_normal(rng, _shape(size, n))
    g = sigma_g * (a @ basis.mixing(m).T + residual_weights(basis, m) * b)
    return TruncatedRealization(g, a, b)


def _direction_cosines(rng: np.random.Generator, shape, model: str):
    """Return (sin(theta) cos(phi), cos(theta)) for the two aperture axes."""
    if model == "uniform":
        theta = rng.uniform(0.0, math.pi, shape)
        phi = rng.uniform(0.0, 2 * math.pi, shape)
        return np.sin(theta) * np.cos(phi), np.cos(theta)
    if model == "isotropic":
        cos_t = rng.uniform(-1.0, 1.0, shape)
        phi = rng.uniform(0.0, 2 * math.pi, shape)
        return np.sqrt(1.0 - cos_t ** 2) * np.cos(phi), cos_t
    psi = rng.uniform(0.0, 2 * math.pi, shape)
    return np.cos(psi), np.sin(psi)


def draw_angles(rng: np.random.Generator, n_paths: int, model: str = "uniform", size=None):
    """Direction cosines for the LOS ray (index 0) and ``n_paths`` scattered rays."""
    return _direction_cosines(rng, _shape(size, n_paths + 1), model)


def _steering(grid: FasGrid, u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Plane-wave phase factors split per axis: exp(-j 2 pi x u1) * exp(-j 2 pi y u2).
    d1, d2 = grid.spacing
    x = np.arange(grid.n1) * d1
    y = np.arange(grid.n2) * d2
    e1 = np.exp(-2j * np.pi * u1[..., None] * x)
    e2 = np.exp(-2j * np.pi * u2[..., None] * y)
    return e1, e2


def los_vector(grid: FasGrid, u1, u2) -> np.ndarray:
    """Unit-modulus LOS phase ramp across the ports for given direction cosines."""
    e1, e2 = _steering(grid, np.asarray(u1), np.asarray(u2))
    return (e1[..., :, None] * e2[..., None, :]).reshape(*np.shape(u1), grid.n_ports)


def sample_finite_scattering(grid: FasGrid, params: FiniteScatterParams, rng: np.random.Generator,
                             size=None, angles=None) -> np.ndarray:
    """Loopback gains from a LOS ray and ``n_paths`` scattered plane waves.

    ``angles`` may carry fixed direction cosines ``(u1, u2)`` of length
    ``n_paths + 1``; otherwise they are redrawn for every trial.
    """
    npaths = params.n_paths
    sigma_g = math.sqrt(params.sigma_g2)
    if angles is None:
        u1, u2 = draw_angles(rng, npaths, params.angle_model, size)
    else:
        u1, u2 = (np.broadcast_to(np.asarray(v, float), _shape(size, npaths + 1)) for v in angles)
    los_phase = rng.uniform(0.0, 2 * math.pi, _shape(size))
    scatter_std = math.sqrt((1.0 - params.los_weight) / npaths)
    gains = scatter_std * sigma_g * complex_normal(rng, _shape(size, npaths))

    e1, e2 = _steering(grid, u1, u2)
    los_amp = math.sqrt(params.los_weight) * sigma_g * np.exp(1j * los_phase)
    coeffs = np.concatenate([np.asarray(los_amp)[..., None], gains], axis=-1)
    # sum over rays of coeff * e1 (x) e2, as a batched (n1, L) @ (L, n2) product
    g = np.swapaxes(coeffs[..., None] * e1, -1, -2) @ e2
    return g.reshape(*_shape(size), grid.n_ports)


# -- wideband ------------------------------------------------------------


class CyclicPrefixError(ValueError):
    """A tap delay reaches past the FFT length."""


@dataclass(frozen=True)
class TapProfile:
    powers_db: tuple[float, ...]
    delays_us: tuple[float, ...]
    sample_rate_hz: float = 7.68e6
    fft_size: int = 512
    k_factor_tap0: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "powers_db", tuple(float(p) for p in self.powers_db))
        object.__setattr__(self, "delays_us", tuple(float(d) for d in self.delays_us))
        if len(self.powers_db) != len(self.delays_us) or not self.powers_db:
            raise ValueError("powers_db and delays_us must be nonempty and equally long")
        if any(b < a for a, b in zip(self.delays_us, self.delays_us[1:])):
            raise ValueError(f"tap delays must be nondecreasing, got {self.delays_us}")
        if self.k_factor_tap0 < 0:
            raise ValueError("tap-0 Rice factor must be nonnegative")
        if self.fft_size < 1:
            raise ValueError("fft_size must be positive")
        if max(self.delay_samples) >= self.fft_size:
            raise CyclicPrefixError(f"delay {max(self.delay_samples)} samples >= FFT size {self.fft_size}")

    @classmethod
    def iab(cls, k_factor: float = 3.0) -> "TapProfile":
        """Three-tap IAB backhaul profile [0/0, -25/2, -30/7] dB/us at 7.68 MHz."""
        return cls((0.0, -25.0, -30.0), (0.0, 2.0, 7.0), 7.68e6, 512, k_factor)

    @classmethod
    def flat(cls, fft_size: int = 512, k_factor: float = 0.0) -> "TapProfile":
        return cls((0.0,), (0.0,), 7.68e6, fft_size, k_factor)

    @property
    def delay_samples(self) -> np.ndarray:
        return np.rint(np.asarray(self.delays_us) * 1e-6 * self.sample_rate_hz).astype(int)

    @property
    def linear_powers(self) -> np.ndarray:
        p = 10.0 ** (np.asarray(self.powers_db) / 10.0)
        return p / p.sum()


def tap_frequency_response(taps: np.ndarray, delays, fft_size: int) -> np.ndarray:
    """``g[f] = sum_l h_l exp(-j 2 pi f d_l / F)`` over the last (tap) axis of ``taps``."""
    delays = np.asarray(delays, dtype=int)
    if np.any(delays < 0) or np.any(delays >= fft_size):
        raise CyclicPrefixError(f"tap delays {delays.tolist()} must lie in [0, {fft_size})")
    taps = np.asarray(taps)
    idx = np.outer(delays, np.arange(fft_size)) % fft_size
    kernel = np.exp(-2j * np.pi * idx / fft_size)
    # quarter turns are exact so flat taps and comb nulls carry no round-off
    quarter = (4 * idx) % fft_size == 0
    kernel[quarter] = np.array([1, -1j, -1, 1j])[(4 * idx[quarter]) // fft_size]
    return taps @ kernel


@dataclass
class WidebandRealization:
    """Per-port, per-subcarrier gains, shape ``(..., N, F)``."""

    g_d: np.ndarray
    g_si: np.ndarray


def sample_wideband_link(basis: EigenBasis, profile: TapProfile, rng: np.random.Generator,
                         k_factor_tap0: float = 0.0, sigma_g: float = 1.0, size=None) -> np.ndarray:
    """One link's ``(..., N, F)`` response: every tap spatially correlated by Sigma,
    taps independent, tap 0 optionally Rician with a random-direction LOS ray."""
    n = basis.n_ports
    p = profile.linear_powers
    a = complex_normal(rng, _shape(size, n, p.size))
    # (..., N, L): per-tap port vectors with covariance Sigma
    taps = np.einsum("nk,...kl->...nl", basis.mixing(n), a) * (sigma_g * np.sqrt(p))
    if k_factor_tap0 > 0:
        if basis.grid is None:
            raise ValueError("a Rician tap needs the port geometry")
        kf = k_factor_tap0
        w_los = 1.0 if math.isinf(kf) else kf / (kf + 1.0)
        u1, u2 = _direction_cosines(rng, _shape(size), "uniform")
        phase = rng.uniform(0.0, 2 * math.pi, _shape(size))
        los = los_vector(basis.grid, u1, u2) * np.exp(1j * np.asarray(phase))[..., None]
        taps[..., 0] = (math.sqrt(1.0 - w_los) * taps[..., 0]
                        + math.sqrt(w_los) * sigma_g * math.sqrt(p[0]) * los)
    return tap_frequency_response(taps, profile.delay_samples, profile.fft_size)


def sample_wideband_iab(basis: EigenBasis, profile: TapProfile, rng: np.random.Generator,
                        sigma_g: float = 1.0, size=None, rng_si: np.random.Generator | None = None
                        ) -> WidebandRealization:
    """Forward link all-Rayleigh, loopback link Rician on tap 0; same power-delay profile."""
    g_d = sample_wideband_link(basis, profile, rng, 0.0, sigma_g, size)
    g_si = sample_wideband_link(basis, profile, rng if rng_si is None else rng_si,
                                profile.k_factor_tap0, sigma_g, size)
    return WidebandRealization(g_d, g_si)
