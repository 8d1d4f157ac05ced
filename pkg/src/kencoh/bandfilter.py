"""Zero-phase Butterworth bandpass filtering and spectral checks."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import signal

from .errors import InsufficientDataError, InvalidConfigurationError
from .types import FrequencyBand

DEFAULT_ORDER = 4
SETTLING_TOLERANCE = 1e-6


@dataclass(frozen=True)
class BandpassFilter:
    """Butterworth bandpass design stored as second-order sections."""

    band: FrequencyBand
    order: int
    sos: np.ndarray

    def response(self, freqs_hz) -> np.ndarray:
        """Complex single-pass frequency response at ``freqs_hz``."""
        freqs_hz = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
        _, h = signal.sosfreqz(self.sos, worN=freqs_hz, fs=self.band.sampling_rate)
        return h

    def power_gain(self, freqs_hz) -> np.ndarray:
        """Squared magnitude of the single-pass response."""
        return np.abs(self.response(freqs_hz)) ** 2

    def zero_phase_gain(self, freqs_hz) -> np.ndarray:
        """Amplitude gain of the forward-backward filter, i.e. ``|H|**2``."""
        return self.power_gain(freqs_hz)

    @cached_property
    def settling_length(self) -> int:
        """Index after which the impulse response stays below 1e-6."""
        n = 1024
        while True:
            impulse = np.zeros(n)
            impulse[0] = 1.0
            h = signal.sosfilt(self.sos, impulse)
            above = np.flatnonzero(np.abs(h) >= SETTLING_TOLERANCE)
            last = int(above[-1]) + 1 if above.size else 0
            if last < n // 2 or n >= 1 << 22:
                return last
            n *= 4

    def poles(self) -> np.ndarray:
        _, p, _ = signal.sos2zpk(self.sos)
        return p


def design_butterworth(band: FrequencyBand, order: int = DEFAULT_ORDER) -> BandpassFilter:
    """Butterworth bandpass whose -3 dB points sit at the band edges."""
    if int(order) != order or not 1 <= order <= 12:
        raise InvalidConfigurationError(f"filter order must be an integer in [1, 12], got {order}")
    sos = signal.butter(int(order), [band.low_hz, band.high_hz], btype="bandpass",
                        fs=band.sampling_rate, output="sos")
    filt = BandpassFilter(band, int(order), sos)
    if np.any(np.abs(filt.poles()) >= 1.0):
        raise InvalidConfigurationError(f"unstable design for band {band.name} at order {order}")
    return filt


def filter_zero_phase(series, filt: BandpassFilter, axis: int = 0) -> np.ndarray:
    """Forward-backward filtering along ``axis``.

    The output has the same shape as the input and no phase shift, so lead-lag
    structure between channels is preserved.
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[axis]
    need = 3 * filt.settling_length
    if n < need:
        raise InsufficientDataError(
            f"series of length {n} is shorter than 3x the settling length "
            f"({need}) of the {filt.band.name} filter"
        )
    # mirror padding over one settling length keeps edge transients out of the band
    pad = min(filt.settling_length, n - 1)
    return signal.sosfiltfilt(filt.sos, x, axis=axis, padtype="even", padlen=pad)


def band_power_fraction(series, band: FrequencyBand) -> float:
    """Fraction of periodogram mass that falls inside ``band``."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 64:
        raise InsufficientDataError("band_power_fraction needs a 1-D series of length >= 64")
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, d=1.0 / band.sampling_rate)
    # one-sided mass: interior bins stand for both +f and -f
    weights = np.full(freqs.size, 2.0)
    weights[0] = 1.0
    if x.size % 2 == 0:
        weights[-1] = 1.0
    mass = power * weights
    total = mass.sum()
    if total <= 0:
        return 0.0
    inside = (freqs >= band.low_hz) & (freqs <= band.high_hz)
    return float(mass[inside].sum() / total)
