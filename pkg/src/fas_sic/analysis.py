"""Bounds and semi-analytical approximations for the minimum port ratio.

The approximation conditions on the ``m`` dominant eigen-mode coefficients of
both links. Given those, every port's gain is an independent noncentral
complex Gaussian, so the minimum ratio has a product-form survival function.
The outer expectation over the mode coefficients is taken by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson

from .channels import residual_weights
from .geometry import EigenBasis
from .rng import complex_normal
from .specfun import _i0e_unchecked, marcum_q1


class Estimate(NamedTuple):
    value: float | np.ndarray
    stderr: float | np.ndarray


class QuadratureError(ArithmeticError):
    pass


class TailBoundError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ApproxConfig:
    """Settings for the eigen-mode approximation.

    ``window_sigmas`` bounds the inner integral to ``sqrt(alpha) +- k sqrt(beta)``
    in the amplitude domain. ``inner`` selects the per-port survival routine:
    ``"closed"`` (two-Gaussian comparison formula) or ``"quadrature"``.
    """

    m: int = 7
    outer_samples: int = 2000
    window_sigmas: float = 9.0
    r_grid: tuple[float, ...] | None = None
    r_points: int = 201
    r_min: float = 1e-6
    tail_tol: float = 1e-6
    r_cap: float = 1e8
    inner: str = "closed"
    quad_tol: float = 1e-10

    def __post_init__(self):
        if self.m < 1 or self.outer_samples < 1:
            raise ValueError("need m >= 1 and outer_samples >= 1")
        if self.r_grid is not None:
            g = np.asarray(self.r_grid, dtype=float)
            if g.ndim != 1 or g.size < 3 or np.any(np.diff(g) <= 0) or g[0] <= 0:
                raise ValueError("r_grid must be positive and strictly increasing (>= 3 points)")
        if self.inner not in ("closed", "quadrature"):
            raise ValueError(f"unknown inner method {self.inner!r}")


# -- uncorrelated bound ----------------------------------------------------


def cdf_lower_R(r, n_ports: int):
    """CDF of the minimum of ``n_ports`` iid exponential ratios: ``1 - (1+r)^-N``."""
    if n_ports < 1:
        raise ValueError("n_ports must be >= 1")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    out = -np.expm1(-n_ports * np.log1p(r))
    return float(out) if out.ndim == 0 else out


def rsi_lower_bound(n_ports: int, kappa_e: float) -> float:
    """Mean RSI power with fully decorrelated ports, ``kappa_e / (N - 1)``."""
    if n_ports < 2:
        raise ValueError(f"the mean bound needs at least 2 ports, got {n_ports}")
    return kappa_e / (n_ports - 1)


# -- conditional model -----------------------------------------------------


def alpha_beta(a_coeffs, basis: EigenBasis, port: int | None = None, sigma_g2: float = 1.0):
    """Noncentrality ``alpha`` and per-component variance ``beta`` of each port given the mode coefficients.

    ``a_coeffs`` has shape ``(..., M)``; results have shape ``(..., N)`` and
    ``(N,)``, or are indexed at ``port``.
    """
    a = np.asarray(a_coeffs, dtype=complex)
    m = a.shape[-1]
    n = basis.n_ports
    if m > n:
        raise ValueError(f"M = {m} exceeds the port count {n}")
    if m == 0:
        alpha = np.zeros(a.shape[:-1] + (n,))
        beta = np.full(n, sigma_g2 / 2)
    else:
        mean = a @ basis.mixing(m).T
        alpha = sigma_g2 * np.abs(mean) ** 2
        beta = 0.5 * sigma_g2 * residual_weights(basis, m) ** 2
    if port is not None:
        return alpha[..., port], beta[port]
    return alpha, beta


def _survival_closed(r, a_d, b_d, a_si, b_si):
    """P(|g_si|^2 > r |g_d|^2) for independent noncentral complex Gaussians (broadcasting)."""
    r, a_d, b_d, a_si, b_si = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, a_d, b_d, a_si, b_si)))
    den = b_si + r * b_d
    degenerate = den <= 0
    safe = np.where(degenerate, 1.0, den)
    big_a = np.sqrt(np.where(degenerate, 0.0, r * a_d / safe))
    big_b = np.sqrt(np.where(degenerate, 0.0, a_si / safe))
    weight = np.where(degenerate, 0.0, b_si / safe)
    s = (1.0 - marcum_q1(big_a, big_b)
         + weight * np.exp(-0.5 * (big_a - big_b) ** 2) * _i0e_unchecked((big_a * big_b).ravel()).reshape(big_a.shape))
    s = np.where(degenerate, (a_si > r * a_d).astype(float), s)
    return np.clip(s, 0.0, 1.0)


_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_GK_X = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_GK_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss-7 nodes sit at odd positions of the 15-point Kronrod set
_GK_WG = np.zeros(15)
_GK_WG[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


def adaptive_gk15(f, lo: float, hi: float, tol: float = 1e-10, init_panels: int = 4,
                  max_rounds: int = 40) -> np.ndarray:
    """Globally adaptive Gauss-Kronrod (7/15) quadrature of a vector-valued integrand.

    ``f`` maps a 1-D node array of length n to values of shape ``(k, n)``.
    Panels whose Kronrod-Gauss gap exceeds their share of ``tol`` are bisected.
    """
    edges = np.linspace(lo, hi, init_panels + 1)
    panels = np.column_stack([edges[:-1], edges[1:]])
    total_len = hi - lo
    acc = None
    for _ in range(max_rounds):
        mid = 0.5 * (panels[:, 0] + panels[:, 1])
        half = 0.5 * (panels[:, 1] - panels[:, 0])
        nodes = mid[:, None] + half[:, None] * _GK_X
        vals = np.asarray(f(nodes.ravel()))
        vals = vals.reshape(vals.shape[0], *nodes.shape)
        kron = (vals @ _GK_WK) * half
        gauss = (vals @ _GK_WG) * half
        err = np.max(np.abs(kron - gauss), axis=0)
        ok = err <= tol * np.maximum(2 * half / total_len, 1e-3)
        part = kron[:, ok].sum(axis=1)
        acc = part if acc is None else acc + part
        if np.all(ok):
            return acc
        bad = panels[~ok]
        m = 0.5 * (bad[:, 0] + bad[:, 1])
        panels = np.concatenate([np.column_stack([bad[:, 0], m]), np.column_stack([m, bad[:, 1]])])
    raise QuadratureError(
        f"adaptive quadrature on [{lo:.6g}, {hi:.6g}] did not converge: "
        f"{len(panels)} panels still above tol={tol:g}, worst gap {err.max():.3g}")


def _survival_quadrature(r, a_d, b_d, a_si, b_si, window_sigmas=9.0, tol=1e-10):
    """Same survival as ``_survival_closed`` for one port, by integrating over |g_d|."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if b_d <= 0 or b_si <= 0:
        return _survival_closed(r, a_d, b_d, a_si, b_si)
    nu = math.sqrt(a_d)
    sd = math.sqrt(b_d)
    lo = max(0.0, nu - window_sigmas * sd)
    hi = nu + window_sigmas * sd
    q_arg = math.sqrt(a_si / b_si)
    scale = np.sqrt(r / b_si)

    def integrand(rho):
        # Rice density of |g_d| written with the scaled Bessel function
        pdf = rho / b_d * np.exp(-0.5 * (rho - nu) ** 2 / b_d) * _i0e_unchecked(rho * nu / b_d)
        return marcum_q1(q_arg, scale[:, None] * rho[None, :]) * pdf

    out = np.clip(adaptive_gk15(integrand, lo, hi, tol), 0.0, 1.0)
    # at r = 0 the survival is exactly 1; do not leave quadrature round-off there
    zero = r == 0
    out[zero] = _survival_closed(r[zero], a_d, b_d, a_si, b_si)
    return out


def _as_pairs(ab):
    alpha, beta = ab
    return np.atleast_1d(np.asarray(alpha, dtype=float)), np.atleast_1d(np.asarray(beta, dtype=float))


def conditional_min_cdf(r, alpha_beta_d, alpha_beta_si, method: str = "quadrature",
                        tol: float = 1e-10, window_sigmas: float = 9.0):
    """CDF of the minimum port ratio given per-port ``(alpha, beta)`` of both links.

    ``1 - prod_n P(R_n > r)``; each factor is the inner integral of the
    noncentral chi-square CDF of the loopback gain against the density of the
    forward gain.
    """
    a_d, b_d = _as_pairs(alpha_beta_d)
    a_si, b_si = _as_pairs(alpha_beta_si)
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    if method == "closed":
        surv = _survival_closed(r[None, :], a_d[:, None], b_d[:, None], a_si[:, None], b_si[:, None])
    elif method == "quadrature":
        surv = np.stack([_survival_quadrature(r, a_d[n], b_d[n], a_si[n], b_si[n], window_sigmas, tol)
                         for n in range(a_d.size)])
    else:
        raise ValueError(f"unknown method {method!r}")
    cdf = 1.0 - np.prod(surv, axis=0)
    return float(cdf[0]) if scalar else cdf


# -- Monte Carlo over the mode coefficients ---------------------------------


def _draw_modes(basis: EigenBasis, cfg: ApproxConfig, rng, sigma_g2: float):
    m = min(cfg.m, basis.n_ports)
    a_d = complex_normal(rng, (cfg.outer_samples, m))
    a_si = complex_normal(rng, (cfg.outer_samples, m))
    alpha_d, beta = alpha_beta(a_d, basis, sigma_g2=sigma_g2)
    alpha_si, _ = alpha_beta(a_si, basis, sigma_g2=sigma_g2)
    return alpha_d, alpha_si, beta


def _survival_products(r, alpha_d, alpha_si, beta, cfg: ApproxConfig, chunk: int = 64):
    """(S, R) conditional survival of the minimum for every outer sample."""
    out = np.empty((alpha_d.shape[0], r.size))
    if cfg.inner == "closed":
        for s in range(0, alpha_d.shape[0], chunk):
            sl = slice(s, s + chunk)
            surv = _survival_closed(r[None, None, :], alpha_d[sl, :, None], beta[None, :, None],
                                    alpha_si[sl, :, None], beta[None, :, None])
            out[sl] = np.prod(surv, axis=1)
    else:
        for s in range(alpha_d.shape[0]):
            out[s] = 1.0 - conditional_min_cdf(r, (alpha_d[s], beta), (alpha_si[s], beta), "quadrature",
                                               cfg.quad_tol, cfg.window_sigmas)
    return out


def approx_cdf(r, basis: EigenBasis, cfg: ApproxConfig, rng: np.random.Generator,
               sigma_g2: float = 1.0) -> Estimate:
    """CDF of the truncated-model minimum ratio, averaged over ``outer_samples`` mode draws.

    The same mode draws serve every ``r``, so the estimate is monotone in r.
    """
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    alpha_d, alpha_si, beta = _draw_modes(basis, cfg, rng, sigma_g2)
    cdf = 1.0 - _survival_products(r, alpha_d, alpha_si, beta, cfg)
    value = cdf.mean(axis=0)
    se = cdf.std(axis=0, ddof=1) / math.sqrt(cdf.shape[0]) if cdf.shape[0] > 1 else np.full(r.size, np.nan)
    if scalar:
        return Estimate(float(value[0]), float(se[0]))
    return Estimate(value, se)


def _default_grid(cfg: ApproxConfig, r_max: float) -> np.ndarray:
    return np.geomspace(cfg.r_min, r_max, cfg.r_points)


def approx_mean_rsi(basis: EigenBasis, cfg: ApproxConfig, kappa_e: float, rng: np.random.Generator,
                    sigma_g2: float = 1.0) -> Estimate:
    """Mean RSI power of the truncated model, ``kappa_e * E[R_hat]``.

    Integrates each draw's conditional survival over a log-spaced r grid
    (Simpson's rule in log r), adds ``r_min`` worth of head and a power-law
    tail ``S(r_max) r_max / (N-1)``. The grid is widened until the averaged
    survival at its end drops below ``tail_tol``.
    """
    n = basis.n_ports
    if n < 2:
        raise TailBoundError("the mean minimum ratio diverges for a single port")
    alpha_d, alpha_si, beta = _draw_modes(basis, cfg, rng, sigma_g2)

    if cfg.r_grid is not None:
        grid = np.asarray(cfg.r_grid, dtype=float)
    else:
        grid = _default_grid(cfg, 1e-8 ** (-1.0 / n) - 1.0)
    while True:
        surv = _survival_products(grid, alpha_d, alpha_si, beta, cfg)
        end = surv[:, -1].mean()
        if end <= cfg.tail_tol:
            break
        if cfg.r_grid is not None or grid[-1] >= cfg.r_cap:
            raise TailBoundError(
                f"mean survival {end:.3g} at r = {grid[-1]:.3g} exceeds tail_tol = {cfg.tail_tol:g}; "
                "extend the r grid")
        grid = _default_grid(cfg, min(grid[-1] * 10.0, cfg.r_cap))

    head = grid[0] * 0.5 * (1.0 + surv[:, 0])
    body = simpson(surv * grid, x=np.log(grid), axis=1)
    tail = surv[:, -1] * grid[-1] / (n - 1)
    per_draw = kappa_e * (head + body + tail)
    se = per_draw.std(ddof=1) / math.sqrt(per_draw.size) if per_draw.size > 1 else math.nan
    return Estimate(float(per_draw.mean()), float(se))
