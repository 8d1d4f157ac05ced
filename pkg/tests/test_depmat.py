import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kencoh.depmat import (estimate_gamma, kendall_gamma, kendall_tau_lagged,
                           mcd_gamma, pearson_gamma, repair_psd)
from kencoh.errors import (DegenerateChannelError, InsufficientDataError,
                           InvalidArgumentError)
from kencoh.types import LagGrid
from oracles import brute_kendall_lagged


def test_identical_series_give_one():
    x = np.random.default_rng(0).standard_normal(50)
    assert kendall_tau_lagged(x, x, 0) == pytest.approx(1.0)
    assert kendall_tau_lagged(x, -x, 0) == pytest.approx(-1.0)


def test_monotone_transform_is_invisible():
    x = np.random.default_rng(1).standard_normal(80)
    y = np.random.default_rng(2).standard_normal(80)
    assert kendall_tau_lagged(x, y, 2) == kendall_tau_lagged(np.exp(x), y ** 3, 2)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(8, 60), lag=st.integers(-5, 5), seed=st.integers(0, 2**31))
def test_matches_brute_force(n, lag, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n + abs(lag))
    b = rng.standard_normal(n + abs(lag))
    assert kendall_tau_lagged(a, b, lag) == brute_kendall_lagged(a, b, lag)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(10, 40), seed=st.integers(0, 2**31))
def test_ties_match_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, n).astype(float)
    b = rng.integers(0, 3, n).astype(float)
    assert kendall_tau_lagged(a, b, 1) == pytest.approx(brute_kendall_lagged(a, b, 1), abs=1e-15)


def test_short_overlap_rejected():
    x = np.arange(10.0)
    with pytest.raises(InsufficientDataError):
        kendall_tau_lagged(x, x, 5)


def test_kendall_gamma_entries_agree_with_pairwise_function():
    rng = np.random.default_rng(3)
    block = rng.standard_normal((70, 4))
    g = kendall_gamma(block, 3)
    for lag in range(4):
        for j in range(4):
            for k in range(4):
                if lag == 0 and j == k:
                    continue
                assert g[lag, j, k] == kendall_tau_lagged(block[:, j], block[:, k], lag)
    assert np.allclose(np.diag(g[0]), 1.0)
    assert np.allclose(g[0], g[0].T)


def test_negative_lag_is_transpose():
    rng = np.random.default_rng(4)
    block = rng.standard_normal((120, 3))
    gamma = estimate_gamma(block, "kendall", LagGrid(2), 1)
    assert np.array_equal(gamma.at(-2), gamma.at(2).T)
    assert gamma.at(-1)[0, 2] == kendall_tau_lagged(block[:, 0], block[:, 2], -1)


def test_pearson_uses_lag0_variances():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((200, 2))
    g = pearson_gamma(z, 2)
    c = z - z.mean(axis=0)
    expected = (c[:-2, 0] @ c[2:, 1] / 200) / np.sqrt((c[:, 0] @ c[:, 0] / 200) * (c[:, 1] @ c[:, 1] / 200))
    assert g[2, 0, 1] == pytest.approx(expected, rel=1e-12)


def test_delayed_copy_peaks_at_its_delay():
    rng = np.random.default_rng(6)
    base = rng.standard_normal(303)
    block = np.column_stack([base[3:], base[:-3]])   # column 1 lags column 0 by 3
    for kind in ("kendall", "pearson"):
        gamma = estimate_gamma(block, kind, LagGrid(4), 1)
        cross = [abs(gamma.blocks(l)[1][0, 0]) for l in range(-4, 5)]
        assert int(np.argmax(cross)) - 4 == 3


def test_gaussian_sine_transform_recovers_correlation():
    rng = np.random.default_rng(7)
    cov = np.array([[1.0, 0.6], [0.6, 1.0]])
    z = rng.multivariate_normal([0, 0], cov, size=20000)
    assert kendall_tau_lagged(z[:, 0], z[:, 1]) == pytest.approx(0.6, abs=0.02)


def test_constant_channel_reported_by_index():
    block = np.random.default_rng(8).standard_normal((50, 3))
    block[:, 2] = 1.5
    with pytest.raises(DegenerateChannelError) as info:
        estimate_gamma(block, "pearson", LagGrid(1), 1)
    assert info.value.column == 2


def test_trial_too_short_for_lags():
    with pytest.raises(InsufficientDataError):
        estimate_gamma(np.random.default_rng(0).standard_normal((20, 2)), "kendall", LagGrid(6), 1)


def test_mcd_resists_gross_outliers():
    rng = np.random.default_rng(9)
    cov = np.array([[1.0, 0.7], [0.7, 1.0]])
    z = rng.multivariate_normal([0, 0], cov, size=400)
    z[:30] = rng.normal(0, 30, size=(30, 2)) * np.array([1, -1])
    robust = mcd_gamma(z, 0, 1, seed=1)[0, 1]
    naive = np.corrcoef(z.T)[0, 1]
    assert abs(robust - 0.7) < 0.1
    assert abs(naive - 0.7) > 0.3


def test_mcd_lagged_cross_block_sees_the_delay():
    rng = np.random.default_rng(10)
    base = rng.standard_normal(402)
    block = np.column_stack([base[2:], base[:-2] + 0.3 * rng.standard_normal(400)])
    gamma = estimate_gamma(block, "mcd", LagGrid(2), 1, seed=3)
    assert gamma.blocks(2)[1][0, 0] > 0.9
    assert abs(gamma.blocks(-2)[1][0, 0]) < 0.2
    # each lag is standardized by the fit that produced it
    xx, yy = gamma.standardizers(2)
    assert xx.shape == (1, 1) and yy.shape == (1, 1)


def test_repair_leaves_valid_matrix_alone():
    g = np.array([[1.0, 0.3], [0.3, 1.0]])
    assert np.array_equal(repair_psd(g), g)


def test_repair_lifts_negative_eigenvalue():
    g = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    fixed = repair_psd(g)
    assert np.linalg.eigvalsh(fixed)[0] >= 0.5e-6
    assert np.allclose(np.diag(fixed), 1.0)
    assert np.allclose(fixed, fixed.T)


def test_repair_rejects_asymmetric_input():
    with pytest.raises(InvalidArgumentError):
        repair_psd(np.array([[1.0, 0.2], [0.1, 1.0]]))


def test_identical_columns_are_perfectly_dependent():
    x = np.random.default_rng(11).standard_normal(200)
    block = np.column_stack([x, x])
    for kind in ("kendall", "pearson"):
        assert np.allclose(estimate_gamma(block, kind, LagGrid(0), 1).at(0), 1.0)


def test_identical_columns_leave_mcd_without_a_regular_subset():
    from kencoh.errors import DegenerateDataError
    x = np.random.default_rng(11).standard_normal(200)
    with pytest.raises(DegenerateDataError):
        mcd_gamma(np.column_stack([x, x]), 0, 1)


def test_white_noise_null_band():
    block = np.random.default_rng(12).standard_normal((2048, 3))
    g = kendall_gamma(block, 3)
    off = [g[l, j, k] for l in range(4) for j in range(3) for k in range(3) if l or j != k]
    assert np.max(np.abs(off)) < 0.08


def test_kendall_and_pearson_agree_on_gaussian_data():
    rng = np.random.default_rng(13)
    z = rng.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1]], size=4096)
    assert kendall_gamma(z, 0)[0, 0, 1] == pytest.approx(0.6, abs=0.05)
    assert pearson_gamma(z, 0)[0, 0, 1] == pytest.approx(0.6, abs=0.05)


def test_mcd_close_to_sample_correlation_on_clean_data():
    rng = np.random.default_rng(14)
    z = rng.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]], size=1024)
    assert mcd_gamma(z, 0, 1, seed=0)[0, 1] == pytest.approx(np.corrcoef(z.T)[0, 1], abs=0.08)


def test_mcd_ignores_far_contamination():
    rng = np.random.default_rng(15)
    z = rng.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]], size=1000)
    clean = np.corrcoef(z.T)[0, 1]
    dirty = z.copy()
    idx = rng.choice(1000, 100, replace=False)
    dirty[idx] = 50.0 * np.array([1.0, -1.0])
    assert abs(mcd_gamma(dirty, 0, 1, seed=0)[0, 1] - clean) < 0.1
    assert abs(np.corrcoef(dirty.T)[0, 1] - clean) > 0.2


def test_mcd_support_fraction_precondition():
    from kencoh.errors import InvalidConfigurationError
    with pytest.raises(InvalidConfigurationError):
        mcd_gamma(np.random.default_rng(0).standard_normal((100, 2)), 0, 1, support_fraction=0.4)
