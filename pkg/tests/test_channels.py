import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fas_sic.channels import (
    CyclicPrefixError,
    FiniteScatterParams,
    TapProfile,
    residual_weights,
    sample_finite_scattering,
    sample_rich,
    sample_truncated,
    sample_wideband_iab,
    tap_frequency_response,
)
from fas_sic.geometry import FasGrid, eigen_basis, grid_basis
from fas_sic.rng import complex_normal, substream

N_DRAWS = 100_000


def rng(block=0, role="forward", seed=1):
    return substream(seed, block, role)


def cov_within_3se(g, sigma, sigma_g2=1.0):
    """Empirical E[g g^H] entrywise within 3 standard errors of sigma_g2 * sigma."""
    n = g.shape[0]
    prod = g[:, :, None] * g[:, None, :].conj()
    emp = prod.mean(axis=0)
    se = np.sqrt(prod.real.var(axis=0) / n + prod.imag.var(axis=0) / n)
    return np.all(np.abs(emp - sigma_g2 * sigma) <= 3 * se + 1e-12)


def test_complex_normal_moments():
    z = complex_normal(rng(), (200_000,))
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(z * z)) < 0.01


def test_substreams_are_reproducible_and_distinct():
    a = substream(5, 3, "forward").standard_normal(4)
    assert np.array_equal(a, substream(5, 3, "forward").standard_normal(4))
    assert not np.array_equal(a, substream(5, 3, "loopback").standard_normal(4))
    assert not np.array_equal(a, substream(5, 4, "forward").standard_normal(4))
    assert not np.array_equal(a, substream(6, 3, "forward").standard_normal(4))


def test_rich_rank_one_identical_ports():
    b = grid_basis(FasGrid(3, 3, 0.0, 0.0))
    g = sample_rich(b, 1.0, rng(), 50)
    assert np.abs(g - g[:, :1]).max() < 1e-12


def test_rich_identity_decorrelated():
    g = sample_rich(eigen_basis(np.eye(6)), 1.0, rng(), N_DRAWS)
    c = np.abs(np.corrcoef(g.T))
    assert (c - np.diag(np.diag(c))).max() < 0.02


@pytest.mark.parametrize("grid", [FasGrid(3, 3, 0.5, 0.5), FasGrid(2, 4, 2.0, 1.0)])
def test_rich_covariance_recovery(grid):
    b = grid_basis(grid)
    g = sample_rich(b, math.sqrt(2.0), rng(), N_DRAWS)
    assert np.allclose(np.mean(np.abs(g) ** 2, axis=0), 2.0, rtol=0.02)
    assert cov_within_3se(g, b.sigma, 2.0)


def test_truncated_full_order_has_no_residual():
    b = grid_basis(FasGrid(3, 3, 0.5, 0.5))
    assert np.all(residual_weights(b, 9) == 0)
    t = sample_truncated(b, 9, 1.0, rng(), 10)
    assert np.array_equal(t.g_hat, t.a_coeffs @ b.mixing(9).T)


@pytest.mark.parametrize("m", [1, 3, 7])
def test_truncated_unit_variance(m):
    b = grid_basis(FasGrid(3, 3, 0.5, 0.5))
    t = sample_truncated(b, m, 1.0, rng(), N_DRAWS)
    assert t.a_coeffs.shape == (N_DRAWS, m)
    assert np.allclose(np.mean(np.abs(t.g_hat) ** 2, axis=0), 1.0, rtol=0.02)


def test_truncated_rank_one():
    b = grid_basis(FasGrid(2, 3, 0.0, 0.0))
    assert np.all(residual_weights(b, 1) == 0.0)
    t = sample_truncated(b, 1, 1.0, rng(), 20)
    assert np.abs(t.g_hat - t.g_hat[:, :1]).max() < 1e-12


def test_truncated_converges_to_rich():
    b = grid_basis(FasGrid(3, 3, 1.0, 1.0))
    exact = np.abs(sample_rich(b, 1.0, rng(0, "forward", 9), 20_000)[:, 4]) ** 2
    # KS distance of the port power for a two-sample comparison, averaged over ports
    ks = []
    for m in (1, 3, 9):
        t = sample_truncated(b, m, 1.0, rng(0, "loopback", 9), 20_000).g_hat
        ks.append(stats.ks_2samp(np.abs(t[:, 4]) ** 2, exact).statistic)
    assert ks[-1] < 0.03
    assert ks[0] >= ks[-1] - 0.01


def test_truncated_rejects_bad_order():
    b = grid_basis(FasGrid(2, 2, 1.0, 1.0))
    with pytest.raises(ValueError):
        sample_truncated(b, 0, 1.0, rng())
    with pytest.raises(ValueError):
        sample_truncated(b, 5, 1.0, rng())


def test_finite_scatter_pure_los():
    g = FasGrid(4, 4, 2.0, 2.0)
    h = sample_finite_scattering(g, FiniteScatterParams(math.inf, 3, sigma_g2=2.0), rng(), 30)
    assert np.allclose(np.abs(h), math.sqrt(2.0), atol=1e-12)


@pytest.mark.parametrize("k,npaths", [(0.0, 1), (3.0, 5), (7.0, 200)])
def test_finite_scatter_mean_power(k, npaths):
    h = sample_finite_scattering(FasGrid(3, 3, 2.0, 2.0), FiniteScatterParams(k, npaths), rng(), N_DRAWS)
    assert np.allclose(np.mean(np.abs(h) ** 2, axis=0), 1.0, rtol=0.02)


def test_finite_scatter_rich_limit_is_gaussian():
    h = sample_finite_scattering(FasGrid(2, 2, 2.0, 2.0), FiniteScatterParams(0.0, 200), rng(), N_DRAWS)[:, 3]
    # |h|^2 of a unit complex Gaussian is Exponential(1)
    assert stats.kstest(np.abs(h) ** 2, "expon").pvalue > 0.01


def test_finite_scatter_fixed_angles_are_shared():
    g = FasGrid(3, 3, 1.0, 1.0)
    p = FiniteScatterParams(0.0, 4)
    angles = (np.zeros(5), np.zeros(5))  # broadside rays: identical phase at every port
    h = sample_finite_scattering(g, p, rng(), 8, angles=angles)
    assert np.abs(h - h[:, :1]).max() < 1e-12


def test_finite_scatter_param_validation():
    with pytest.raises(ValueError):
        FiniteScatterParams(-1.0, 3)
    with pytest.raises(ValueError):
        FiniteScatterParams(1.0, 0)


def test_tap_response_examples():
    h = 0.3 - 0.4j
    assert np.array_equal(tap_frequency_response(np.array([h]), [0], 16), np.full(16, h))
    comb = tap_frequency_response(np.array([1.0, 1.0]), [0, 8], 16)
    assert np.all(comb[1::2] == 0)
    assert np.allclose(comb[0::2], 2.0)
    with pytest.raises(CyclicPrefixError):
        tap_frequency_response(np.array([1.0]), [16], 16)


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=5),
       st.integers(0, 2**31))
def test_tap_response_parseval(taps, seed):
    h = np.array([complex(a, b) for a, b in taps])
    delays = np.random.default_rng(seed).choice(64, size=h.size, replace=False)
    g = tap_frequency_response(h, delays, 64)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(np.sum(np.abs(h) ** 2), abs=1e-10)


def test_iab_profile():
    p = TapProfile.iab()
    assert p.delay_samples.tolist() == [0, 15, 54]
    assert p.linear_powers.sum() == pytest.approx(1.0, abs=1e-12)
    # 10^(0), 10^(-2.5), 10^(-3) normalised (40-digit reference)
    assert np.allclose(p.linear_powers, [0.99585497508443850, 0.00314916994047706, 0.00099585497508444],
                       rtol=1e-12)


def test_profile_validation():
    with pytest.raises(CyclicPrefixError):
        TapProfile((0.0, -3.0), (0.0, 80.0), 7.68e6, 512)
    with pytest.raises(ValueError):
        TapProfile((0.0, -3.0), (2.0, 1.0))
    with pytest.raises(ValueError):
        TapProfile((0.0,), (0.0, 1.0))


def test_single_tap_wideband_is_flat():
    b = grid_basis(FasGrid(2, 3, 1.0, 1.0))
    w = sample_wideband_iab(b, TapProfile.flat(32), rng(), size=5)
    assert w.g_d.shape == (5, 6, 32)
    assert np.array_equal(w.g_d, np.repeat(w.g_d[..., :1], 32, axis=-1))
    assert np.array_equal(w.g_si, np.repeat(w.g_si[..., :1], 32, axis=-1))


@functools.lru_cache(maxsize=1)
def _wideband_draw():
    b = grid_basis(FasGrid(2, 2, 0.5, 0.5))
    return b, sample_wideband_iab(b, TapProfile.iab(0.0), rng(0, "forward", 3), size=20_000)


@settings(max_examples=10)
@given(st.integers(0, 511))
def test_wideband_subcarrier_covariance(f):
    b, w = _wideband_draw()
    assert cov_within_3se(w.g_d[:, :, f], b.sigma)
    assert np.allclose(np.mean(np.abs(w.g_d[:, :, f]) ** 2, axis=0), 1.0, rtol=0.05)


def test_wideband_rician_power():
    b = grid_basis(FasGrid(3, 3, 1.0, 1.0))
    w = sample_wideband_iab(b, TapProfile.iab(3.0), rng(), size=4000)
    assert np.mean(np.abs(w.g_si) ** 2) == pytest.approx(1.0, rel=0.02)


def test_sampler_determinism():
    b = grid_basis(FasGrid(3, 3, 0.5, 0.5))
    a1 = sample_rich(b, 1.0, substream(42, 7, "forward"), 16)
    a2 = sample_rich(b, 1.0, substream(42, 7, "forward"), 16)
    assert np.array_equal(a1, a2)
