"""Shared domain types: recordings, bands, lag grids and estimator kinds."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidConfigurationError

DELTA_LOWER_HZ = 0.5

# (name, low, high) in Hz; Delta's lower edge is substituted at construction.
STANDARD_BAND_EDGES = (
    ("Delta", 0.0, 4.0),
    ("Theta", 4.0, 8.0),
    ("Alpha", 8.0, 12.0),
    ("Beta", 12.0, 30.0),
    ("Gamma", 30.0, 50.0),
)


class EstimatorKind(str, enum.Enum):
    KENDALL = "kendall"
    PEARSON = "pearson"
    MCD = "mcd"

    @classmethod
    def parse(cls, name: "str | EstimatorKind") -> "EstimatorKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise InvalidConfigurationError(
                f"unknown estimator {name!r}; choose one of {{{choices}}}"
            ) from None


@dataclass(frozen=True)
class FrequencyBand:
    """A frequency band given by its edges in Hz at a sampling rate."""

    name: str
    low_hz: float
    high_hz: float
    sampling_rate: float

    def __post_init__(self):
        nyquist = self.sampling_rate / 2.0
        if not (0.0 < self.low_hz < self.high_hz < nyquist):
            raise InvalidConfigurationError(
                f"band {self.name!r} needs 0 < low < high < {nyquist:g} Hz, "
                f"got ({self.low_hz:g}, {self.high_hz:g})"
            )

    @property
    def omega1(self) -> float:
        return self.low_hz / self.sampling_rate

    @property
    def omega2(self) -> float:
        return self.high_hz / self.sampling_rate

    @property
    def bandwidth(self) -> float:
        return self.omega2 - self.omega1

    @property
    def center_hz(self) -> float:
        """Geometric center of the band."""
        return float(np.sqrt(self.low_hz * self.high_hz))


@dataclass(frozen=True)
class LagGrid:
    max_lag: int

    def __post_init__(self):
        if int(self.max_lag) != self.max_lag or self.max_lag < 0:
            raise InvalidConfigurationError(f"max_lag must be a non-negative integer, got {self.max_lag}")

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.max_lag, self.max_lag + 1)

    def __len__(self):
        return 2 * self.max_lag + 1


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MultiChannelTrials:
    """Trial-partitioned multichannel recording.

    Rows of ``values`` are time points, trial after trial; the first
    ``group_split`` columns form group X and the rest group Y.
    """

    values: np.ndarray
    trial_length: int
    num_trials: int
    group_split: int
    sampling_rate: float
    labels: np.ndarray
    channel_names: tuple = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidArgumentError("values must be a 2-D matrix (time x channel)")
        if self.trial_length < 1 or self.num_trials < 1:
            raise InvalidArgumentError("trial_length and num_trials must be positive")
        if values.shape[0] != self.trial_length * self.num_trials:
            raise InvalidArgumentError(
                f"expected {self.trial_length * self.num_trials} rows "
                f"({self.num_trials} trials of {self.trial_length}), got {values.shape[0]}"
            )
        d = values.shape[1]
        if not 1 <= self.group_split < d:
            raise InvalidArgumentError(f"group split must satisfy 1 <= P < D={d}, got {self.group_split}")
        if self.sampling_rate <= 0:
            raise InvalidArgumentError("sampling_rate must be positive")
        labels = np.asarray(self.labels)
        if labels.shape != (self.num_trials,):
            raise InvalidArgumentError(f"need {self.num_trials} labels, got {labels.size}")
        if not np.isin(labels, (0, 1)).all():
            raise InvalidArgumentError("labels must be 0 or 1")
        names = tuple(self.channel_names) or tuple(f"ch{j + 1}" for j in range(d))
        if len(names) != d:
            raise InvalidArgumentError(f"need {d} channel names, got {len(names)}")
        object.__setattr__(self, "values", _readonly(values))
        labels = labels.astype(int)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "channel_names", names)

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    @property
    def P(self) -> int:
        return self.group_split

    @property
    def Q(self) -> int:
        return self.num_channels - self.group_split

    def trial(self, n: int) -> np.ndarray:
        T = self.trial_length
        return self.values[n * T:(n + 1) * T]

    def with_values(self, values: np.ndarray) -> "MultiChannelTrials":
        return MultiChannelTrials(
            values, self.trial_length, self.num_trials, self.group_split,
            self.sampling_rate, self.labels, self.channel_names,
        )


def standard_bands(sampling_rate: float, delta_low_hz: float = DELTA_LOWER_HZ) -> list[FrequencyBand]:
    """The five conventional EEG bands at ``sampling_rate``.

    Delta nominally starts at 0 Hz; a bandpass filter needs a positive lower
    edge, so it starts at ``delta_low_hz`` instead.
    """
    if sampling_rate <= 100:
        raise InvalidConfigurationError(
            f"sampling rate {sampling_rate:g} Hz puts the 50 Hz Gamma edge at or above Nyquist"
        )
    if not 0 < delta_low_hz < 4.0:
        raise InvalidConfigurationError("delta lower edge must lie in (0, 4) Hz")
    return [
        FrequencyBand(name, low if low > 0 else delta_low_hz, high, float(sampling_rate))
        for name, low, high in STANDARD_BAND_EDGES
    ]


def get_band(name: str, sampling_rate: float, delta_low_hz: float = DELTA_LOWER_HZ) -> FrequencyBand:
    """Look up a standard band by case-insensitive name."""
    for band in standard_bands(sampling_rate, delta_low_hz):
        if band.name.lower() == name.strip().lower():
            return band
    names = ", ".join(b for b, _, _ in STANDARD_BAND_EDGES)
    raise InvalidConfigurationError(f"unknown band {name!r}; choose one of {names}")


def split_trials(data: MultiChannelTrials) -> list[np.ndarray]:
    """Contiguous per-trial views, in trial order."""
    return [data.trial(n) for n in range(data.num_trials)]


def group_blocks(block: np.ndarray, split: int) -> tuple[np.ndarray, np.ndarray]:
    return block[:, :split], block[:, split:]


def as_sequence_of_bands(bands: Sequence[FrequencyBand] | FrequencyBand) -> list[FrequencyBand]:
    if isinstance(bands, FrequencyBand):
        return [bands]
    return list(bands)
