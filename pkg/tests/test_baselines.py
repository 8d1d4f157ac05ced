import numpy as np
import pytest

from kencoh.bandfilter import design_butterworth, filter_zero_phase
from kencoh.baselines import (aggregate_equal_weights, aggregate_pca,
                              mean_pairwise_coherence, pairwise_band_coherence,
                              pca_weights, rescaled_copy_study)
from kencoh.errors import DegenerateChannelError, DegenerateDataError
from kencoh.types import LagGrid, get_band


def _narrowband(n, seed):
    x = np.random.default_rng(seed).standard_normal(n + 2000)
    return filter_zero_phase(x, design_butterworth(get_band("alpha", 128)))[1000:-1000]


def test_self_coherence():
    a = _narrowband(512, 0)
    est = pairwise_band_coherence(a, a, LagGrid(3))
    assert est.value == pytest.approx(1.0) and est.best_lag == 0


def test_delay_is_found_with_sign():
    a = _narrowband(1003, 1)
    x, b = a[3:], a[:-3]     # b(t + 3) == x(t): b lags x by 3
    est = pairwise_band_coherence(x, b, LagGrid(5))
    assert est.value >= 0.95 and est.best_lag == 3
    assert pairwise_band_coherence(b, x, LagGrid(5)).best_lag == -3


def test_independent_noise_stays_low():
    band = get_band("alpha", 128)
    filt = design_butterworth(band)
    rng = np.random.default_rng(2)
    a = filter_zero_phase(rng.standard_normal(2048), filt)
    b = filter_zero_phase(rng.standard_normal(2048), filt)
    assert pairwise_band_coherence(a, b, LagGrid(3)).value < 0.25


def test_constant_input_rejected():
    with pytest.raises(DegenerateChannelError):
        pairwise_band_coherence(np.ones(64), np.arange(64.0), LagGrid(1))


def test_equal_weights():
    x = np.random.default_rng(3).standard_normal(50)
    assert np.array_equal(aggregate_equal_weights(x[:, None]), x)
    assert np.allclose(aggregate_equal_weights(np.column_stack([x, -x])), 0)
    block = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(aggregate_equal_weights(block), [1, 4, 7, 10])


def test_pca_rank_one_and_spike():
    rng = np.random.default_rng(4)
    s = rng.standard_normal(300)
    out = aggregate_pca(np.column_stack([s, -2 * s, 0.5 * s]))
    assert abs(np.corrcoef(out, s)[0, 1]) == pytest.approx(1.0)
    spiked = rng.standard_normal((500, 4))
    spiked[:, 2] *= 10
    w, degenerate = pca_weights(spiked)
    assert abs(w[2]) > 0.9 and w[2] > 0 and not degenerate


def test_pca_zero_variance():
    with pytest.raises(DegenerateDataError):
        aggregate_pca(np.ones((20, 2)))


def test_mean_pairwise_of_identical_channels():
    a = _narrowband(400, 5)
    block = np.column_stack([a, a])
    assert mean_pairwise_coherence(block, block, LagGrid(2)) == pytest.approx(1.0)


def test_rescaled_copy_ordering_small():
    res = rescaled_copy_study(replicates=5, seed=1)
    for r in res:
        assert r.canonical == pytest.approx(1.0, abs=1e-6)
        assert r.canonical > max(r.equal_weights, r.pca, r.mean_pairwise)
