import numpy as np
import pytest

from kencoh.bandfilter import (band_power_fraction, design_butterworth,
                               filter_zero_phase)
from kencoh.errors import InsufficientDataError, InvalidConfigurationError
from kencoh.types import FrequencyBand, get_band, standard_bands


@pytest.mark.parametrize("band", standard_bands(128.0), ids=lambda b: b.name)
def test_white_noise_lands_in_band(band):
    noise = np.random.default_rng(11).standard_normal(4096)
    out = filter_zero_phase(noise, design_butterworth(band))
    assert band_power_fraction(out, band) >= 0.95


def test_unit_gain_at_band_centre_and_stability():
    for band in standard_bands(128.0):
        filt = design_butterworth(band)
        assert filt.power_gain([band.center_hz])[0] == pytest.approx(1.0, abs=0.02)
        assert np.all(np.abs(filt.poles()) < 1)


def test_half_power_at_the_edges():
    band = get_band("alpha", 128.0)
    filt = design_butterworth(band)
    assert filt.power_gain([band.low_hz, band.high_hz]) == pytest.approx([0.5, 0.5], abs=1e-6)


def test_zero_phase_keeps_a_sinusoid_in_place():
    S = 128.0
    t = np.arange(4096) / S
    x = np.sin(2 * np.pi * 10 * t)
    y = filter_zero_phase(x, design_butterworth(get_band("alpha", S)))
    mid = slice(1000, 3000)
    assert np.corrcoef(x[mid], y[mid])[0, 1] > 0.999
    assert abs(y.mean()) < 1e-3


def test_filters_along_the_requested_axis():
    rng = np.random.default_rng(3)
    block = rng.standard_normal((2048, 3))
    filt = design_butterworth(get_band("beta", 128.0))
    both = filter_zero_phase(block, filt, axis=0)
    assert np.allclose(both[:, 1], filter_zero_phase(block[:, 1], filt))


def test_too_short_for_settling():
    filt = design_butterworth(get_band("delta", 128.0))
    with pytest.raises(InsufficientDataError):
        filter_zero_phase(np.zeros(3 * filt.settling_length - 1), filt)


def test_settling_grows_with_narrower_bands():
    lengths = [design_butterworth(b).settling_length for b in standard_bands(128.0)]
    assert lengths[0] > lengths[1] > lengths[-1]


@pytest.mark.parametrize("order", [0, 13, 2.5])
def test_order_validated(order):
    with pytest.raises(InvalidConfigurationError):
        design_butterworth(get_band("theta", 128.0), order)


def test_power_fraction_of_pure_tone():
    S = 128.0
    t = np.arange(1024) / S
    tone = np.cos(2 * np.pi * 20 * t)
    assert band_power_fraction(tone, get_band("beta", S)) == pytest.approx(1.0)
    assert band_power_fraction(tone, get_band("alpha", S)) == pytest.approx(0.0, abs=1e-20)
    assert band_power_fraction(np.zeros(100), get_band("beta", S)) == 0.0


def test_custom_band():
    band = FrequencyBand("custom", 12.0, 16.0, 200.0)
    x = filter_zero_phase(np.random.default_rng(0).standard_normal(8192), design_butterworth(band))
    assert band_power_fraction(x, band) > 0.9
