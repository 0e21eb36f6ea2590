"""Port grid, spatial correlation and its eigendecomposition."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .specfun import bessel_j0


@dataclass(frozen=True)
class FasGrid:
    """An ``n1 x n2`` port grid spread over ``w1 x w2`` wavelengths."""

    n1: int
    n2: int
    w1: float
    w2: float

    def __post_init__(self):
        if int(self.n1) != self.n1 or int(self.n2) != self.n2 or self.n1 < 1 or self.n2 < 1:
            raise ValueError(f"port counts must be positive integers, got ({self.n1}, {self.n2})")
        if not (self.w1 >= 0 and self.w2 >= 0) or not (math.isfinite(self.w1) and math.isfinite(self.w2)):
            raise ValueError(f"apertures must be finite and nonnegative, got ({self.w1}, {self.w2})")

    @property
    def n_ports(self) -> int:
        return self.n1 * self.n2

    @property
    def spacing(self) -> tuple[float, float]:
        """Port pitch per axis in wavelengths; a single-port axis has zero pitch."""
        d1 = self.w1 / (self.n1 - 1) if self.n1 > 1 else 0.0
        d2 = self.w2 / (self.n2 - 1) if self.n2 > 1 else 0.0
        return d1, d2

    def positions(self) -> np.ndarray:
        """(N, 2) port coordinates in wavelengths, row ``n = i1*n2 + i2``."""
        d1, d2 = self.spacing
        i1, i2 = np.divmod(np.arange(self.n_ports), self.n2)
        return np.column_stack([i1 * d1, i2 * d2])


def port_index(i1: int, i2: int, grid: FasGrid) -> int:
    if not (0 <= i1 < grid.n1 and 0 <= i2 < grid.n2):
        raise IndexError(f"port ({i1}, {i2}) outside {grid.n1}x{grid.n2} grid")
    return i1 * grid.n2 + i2


def jakes_correlation(grid: FasGrid) -> np.ndarray:
    """Isotropic-scattering correlation ``J0(2 pi d_nm)`` between all port pairs."""
    d1, d2 = grid.spacing
    # J0 depends only on the index offsets, so evaluate it on the offset table.
    k1 = np.arange(grid.n1)[:, None]
    k2 = np.arange(grid.n2)[None, :]
    table = bessel_j0(2.0 * np.pi * np.hypot(k1 * d1, k2 * d2))
    i1, i2 = np.divmod(np.arange(grid.n_ports), grid.n2)
    return table[np.abs(i1[:, None] - i1[None, :]), np.abs(i2[:, None] - i2[None, :])]


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Eigenpairs of a correlation matrix, sorted by decreasing eigenvalue.

    ``u[:, m]`` is the m-th eigenvector; ``m`` is the truncation order.
    """

    sigma: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    m: int
    grid: FasGrid | None = field(default=None)

    @property
    def n_ports(self) -> int:
        return self.lam.size

    def truncated(self, m: int) -> "EigenBasis":
        if not 1 <= m <= self.n_ports:
            raise ValueError(f"truncation order must lie in [1, {self.n_ports}], got {m}")
        return EigenBasis(self.sigma, self.u, self.lam, int(m), self.grid)

    def mixing(self, m: int | None = None) -> np.ndarray:
        """``U[:, :m] * sqrt(lam[:m])``: maps m iid CN(0,1) modes onto ports."""
        m = self.m if m is None else m
        return self.u[:, :m] * np.sqrt(self.lam[:m])

    def captured_power(self, m: int | None = None) -> np.ndarray:
        """Per-port ``sum_{k<m} lam_k mu_{n,k}^2``."""
        m = self.m if m is None else m
        return (self.u[:, :m] ** 2) @ self.lam[:m]


class EigenDecompositionError(ArithmeticError):
    pass


def eigen_basis(sigma: np.ndarray, grid: FasGrid | None = None) -> EigenBasis:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"sigma must be square, got shape {sigma.shape}")
    try:
        w, v = np.linalg.eigh(sigma)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(f"eigendecomposition failed for grid {grid}: {exc}") from exc
    order = np.argsort(-w, kind="stable")
    lam = w[order]
    # eigenvalues at round-off level are noise of either sign; zero them so
    # rank-deficient correlations stay exactly rank-deficient
    floor = max(lam[0], 1.0) * lam.size * np.finfo(float).eps * 16
    lam = np.where(lam < floor, 0.0, lam)
    u = np.ascontiguousarray(v[:, order])
    return EigenBasis(sigma, u, lam, lam.size, grid)


def grid_basis(grid: FasGrid) -> EigenBasis:
    return eigen_basis(jakes_correlation(grid), grid)


def truncation_order(basis: EigenBasis, energy_fraction: float | None = None,
                     fixed_m: int | None = None) -> int:
    """Smallest M capturing ``energy_fraction`` of the trace, or a clipped fixed M."""
    if (energy_fraction is None) == (fixed_m is None):
        raise ValueError("pass exactly one of energy_fraction or fixed_m")
    n = basis.n_ports
    if fixed_m is not None:
        return int(min(max(fixed_m, 1), n))
    if not 0 < energy_fraction <= 1:
        raise ValueError(f"energy_fraction must lie in (0, 1], got {energy_fraction}")
    captured = np.cumsum(basis.lam) / n
    # tolerance absorbs round-off in the trace so that fraction 1 is reachable
    m = int(np.searchsorted(captured, energy_fraction - 1e-12)) + 1
    return min(m, n)


# -- cache ---------------------------------------------------------------

_CACHE_MAGIC = b"FASEIG"
_CACHE_VERSION = 1
_HEADER = struct.Struct("<6sHIIdd")


def cache_path(cache_dir: str | Path, grid: FasGrid) -> Path:
    return Path(cache_dir) / f"eig_{grid.n1}x{grid.n2}_{grid.w1!r}x{grid.w2!r}.bin"


def save_basis(path: str | Path, basis: EigenBasis) -> None:
    """Write ``(lambda, U)`` as a versioned header plus little-endian row-major doubles."""
    g = basis.grid
    if g is None:
        raise ValueError("only grid-derived bases can be cached")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_CACHE_MAGIC, _CACHE_VERSION, g.n1, g.n2, g.w1, g.w2))
        fh.write(basis.lam.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.u).astype("<f8").tobytes())


class CacheFormatError(ValueError):
    pass


def load_basis(path: str | Path) -> EigenBasis:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    magic, version, n1, n2, w1, w2 = _HEADER.unpack_from(data)
    if magic != _CACHE_MAGIC or version != _CACHE_VERSION:
        raise CacheFormatError(f"{path}: not an eigenbasis cache (version {version})")
    grid = FasGrid(n1, n2, w1, w2)
    n = grid.n_ports
    if len(data) != _HEADER.size + 8 * (n + n * n):
        raise CacheFormatError(f"{path}: payload size does not match a {n1}x{n2} grid")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    lam, u = body[:n], body[n:].reshape(n, n)
    return EigenBasis(jakes_correlation(grid), u, lam, n, grid)


def cached_grid_basis(grid: FasGrid, cache_dir: str | Path | None = None) -> EigenBasis:
    if cache_dir is None:
        return grid_basis(grid)
    path = cache_path(cache_dir, grid)
    if path.exists():
        try:
            basis = load_basis(path)
            if basis.grid == grid:
                return basis
        except CacheFormatError:
            pass  # rebuild below
    basis = grid_basis(grid)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_basis(path, basis)
    return basis
