"""Special functions used by the correlation model and the conditional CDFs.

All three functions accept Python scalars or numpy arrays. Scalars come back
as ``float``. Every routine does a fixed amount of work per element so they
can sit inside vectorized quadrature loops.
"""

from __future__ import annotations

import math

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside a function's domain."""


# Midpoint nodes on [0, pi] for the Bessel integral representation. With 64
# nodes the aliasing error is bounded by 2|J_128(x)|, negligible for |x| <= 25.
_N_THETA = 64
_SIN_THETA = np.sin((np.arange(_N_THETA) + 0.5) * np.pi / _N_THETA)

_J0_SWITCH = 25.0
_I0_SWITCH = 20.0
_I0_SERIES_TERMS = 42
_ASYM_TERMS = 24

# Gauss-Legendre panels for the Marcum integral.
_Q1_PANELS = 4
_Q1_NODES, _Q1_WEIGHTS = np.polynomial.legendre.leggauss(10)
_Q1_HALF_WIDTH = 9.0  # Gaussian tail beyond 9 sigma is below 3e-18
_Q1_CHUNK = 1 << 15


def _as_float_array(x, name: str) -> tuple[np.ndarray, bool]:
    scalar = np.ndim(x) == 0
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr, scalar


def _ret(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _hankel_coeffs(n: int) -> np.ndarray:
    # a_k(0) = prod_{j<=k} (-(2j-1)^2) / (k! 8^k)
    out = np.empty(n)
    out[0] = 1.0
    for k in range(1, n):
        out[k] = out[k - 1] * (-(2 * k - 1) ** 2) / (8.0 * k)
    return out


_HANKEL = _hankel_coeffs(2 * 12)


def bessel_j0(x):
    """Bessel function of the first kind, order zero."""
    arr, scalar = _as_float_array(x, "x")
    ax = np.abs(arr)
    out = np.empty_like(ax)

    small = ax <= _J0_SWITCH
    if np.any(small):
        xs = ax[small]
        out[small] = np.cos(xs[:, None] * _SIN_THETA).mean(axis=1)

    large = ~small
    if np.any(large):
        xl = ax[large]
        inv = 1.0 / xl
        p = np.zeros_like(xl)
        q = np.zeros_like(xl)
        # P = sum (-1)^k a_{2k} x^{-2k},  Q = sum (-1)^k a_{2k+1} x^{-2k-1}
        for k in range(len(_HANKEL) // 2 - 1, -1, -1):
            sign = -1.0 if k % 2 else 1.0
            p = p * inv * inv + sign * _HANKEL[2 * k]
            q = q * inv * inv + sign * _HANKEL[2 * k + 1]
        q = q * inv
        chi = xl - math.pi / 4
        out[large] = np.sqrt(2.0 / (math.pi * xl)) * (p * np.cos(chi) - q * np.sin(chi))
    return _ret(out, scalar)


def _i0e_unchecked(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x <= _I0_SWITCH
    if np.any(small):
        xs = x[small]
        t = 0.25 * xs * xs
        # sum_k t^k / (k!)^2, nested from the tail; all terms positive
        acc = np.ones_like(xs)
        for k in range(_I0_SERIES_TERMS, 0, -1):
            acc = 1.0 + acc * t / (k * k)
        out[small] = acc * np.exp(-xs)
    large = ~small
    if np.any(large):
        xl = x[large]
        term = np.ones_like(xl)
        acc = np.ones_like(xl)
        for k in range(1, _ASYM_TERMS):
            term = term * ((2 * k - 1) ** 2) / (8.0 * k * xl)
            acc += term
        out[large] = acc / np.sqrt(2.0 * math.pi * xl)
    return out


def bessel_i0_scaled(x):
    """Exponentially scaled modified Bessel function ``exp(-x) * I0(x)`` for x >= 0."""
    arr, scalar = _as_float_array(x, "x")
    if np.any(arr < 0):
        raise DomainError(f"x must be nonnegative, got {x!r}")
    return _ret(_i0e_unchecked(arr), scalar)


def _q1_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Q1(a, b) = int_b^inf x exp(-(x-a)^2/2) I0e(a x) dx.  The integrand is a
    # unit-width bump near x = a, so integrate over a 9-sigma window on the
    # short side and use the complement when b < a.
    upper = b >= a
    lo = np.where(upper, b, np.maximum(a - _Q1_HALF_WIDTH, 0.0))
    hi = np.where(upper, b + _Q1_HALF_WIDTH, b)
    h = (hi - lo) / _Q1_PANELS
    offs = (np.arange(_Q1_PANELS)[:, None] + 0.5 + 0.5 * _Q1_NODES).ravel()
    w = np.tile(0.5 * _Q1_WEIGHTS, _Q1_PANELS)
    x = lo[:, None] + h[:, None] * offs
    f = x * np.exp(-0.5 * (x - a[:, None]) ** 2)
    f *= _i0e_unchecked((a[:, None] * x).ravel()).reshape(x.shape)
    integral = h * (f @ w)
    out = np.where(upper, integral, 1.0 - integral)
    return np.clip(out, 0.0, 1.0)


def marcum_q1(a, b):
    """First-order Marcum Q-function Q1(a, b) for a, b >= 0.

    Survival function of a Rice(a, 1) variable at b. Evaluated by composite
    Gauss-Legendre quadrature of the Rice density over a window that carries
    all but ~1e-17 of the mass; ``a == 0`` uses the exact ``exp(-b**2/2)``.
    """
    a_arr, a_scalar = _as_float_array(a, "a")
    b_arr, b_scalar = _as_float_array(b, "b")
    if np.any(a_arr < 0) or np.any(b_arr < 0):
        raise DomainError(f"Marcum Q1 needs a, b >= 0, got a={a!r}, b={b!r}")
    a_arr, b_arr = np.broadcast_arrays(a_arr, b_arr)
    shape = a_arr.shape
    af = a_arr.ravel()
    bf = b_arr.ravel()
    out = np.empty(af.shape)

    zero_a = af == 0.0
    out[zero_a] = np.exp(-0.5 * bf[zero_a] ** 2)
    zero_b = (bf == 0.0) & ~zero_a
    out[zero_b] = 1.0

    rest = np.flatnonzero(~(zero_a | zero_b))
    for start in range(0, rest.size, _Q1_CHUNK):
        idx = rest[start:start + _Q1_CHUNK]
        out[idx] = _q1_block(af[idx], bf[idx])
    out = out.reshape(shape)
    return _ret(out, a_scalar and b_scalar)
