"""Simpler ways to summarise dependence between two channel groups.

These are the usual alternatives to canonical band-coherence: coherence of
one channel pair, coherence between equal-weight or first-principal-component
group summaries, and the average over all cross pairs. A small synthetic
model in which Y is a channelwise rescaling of X shows how they compare.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .bandfilter import DEFAULT_ORDER, design_butterworth
from .cbc import solve_cbc
from .depmat import estimate_gamma
from .errors import (DegenerateChannelError, DegenerateDataError,
                     InsufficientDataError, InvalidArgumentError)
from .types import EstimatorKind, FrequencyBand, LagGrid, get_band

MIN_OVERLAP = 32
EIGENGAP_TOL = 1e-8


@dataclass(frozen=True)
class BandCoherenceEstimate:
    value: float
    best_lag: int

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"coherence {self.value} outside [0, 1]")


def pairwise_band_coherence(a, b, lags: LagGrid) -> BandCoherenceEstimate:
    """Largest squared lagged correlation between two filtered series.

    ``best_lag`` is positive when ``b`` lags ``a``, i.e. when ``a(t)`` lines up
    with ``b(t + lag)``. Ties go to the smallest absolute lag.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise InvalidArgumentError("a and b must be 1-D sequences of equal length")
    T = a.shape[0]
    if T - lags.max_lag < MIN_OVERLAP:
        raise InsufficientDataError(f"overlap {T - lags.max_lag} below {MIN_OVERLAP} at the largest lag")
    for col, x in enumerate((a, b)):
        if not np.ptp(x) > 0:
            raise DegenerateChannelError(col)
    best, best_lag = -1.0, 0
    for lag in sorted(lags.lags, key=lambda l: (abs(l), -l)):
        x, y = (a[:T - lag], b[lag:]) if lag >= 0 else (a[-lag:], b[:T + lag])
        r = np.corrcoef(x, y)[0, 1]
        val = 0.0 if not np.isfinite(r) else r * r
        if val > best + 1e-15:
            best, best_lag = val, lag
    return BandCoherenceEstimate(float(min(best, 1.0)), int(best_lag))


def aggregate_equal_weights(block) -> np.ndarray:
    """Row means of a (T, P) block."""
    block = np.asarray(block, dtype=float)
    if block.ndim == 1:
        return block.copy()
    if block.shape[1] < 1:
        raise InvalidArgumentError("need at least one channel")
    return block.mean(axis=1)


def pca_weights(block):
    """Leading eigenvector of the sample covariance and a small-eigengap flag."""
    block = np.asarray(block, dtype=float)
    if block.ndim != 2:
        raise InvalidArgumentError("expected a (T, D) block")
    T, D = block.shape
    if T <= D:
        raise InsufficientDataError(f"PCA needs more samples ({T}) than channels ({D})")
    centred = block - block.mean(axis=0)
    cov = centred.T @ centred / (T - 1)
    if not np.trace(cov) > 0:
        raise DegenerateDataError("block has zero total variance")
    w, v = np.linalg.eigh(cov)
    lead = v[:, -1]
    if lead[np.argmax(np.abs(lead))] < 0:
        lead = -lead
    degenerate = D > 1 and (w[-1] - w[-2]) < EIGENGAP_TOL * max(w[-1], 1.0)
    return lead, bool(degenerate)


def aggregate_pca(block) -> np.ndarray:
    """First principal component scores (centred) of a (T, D) block."""
    block = np.asarray(block, dtype=float)
    weights, _ = pca_weights(block)
    return (block - block.mean(axis=0)) @ weights


def mean_pairwise_coherence(x_block, y_block, lags: LagGrid) -> float:
    """Average pairwise band coherence over all X-Y channel pairs."""
    x_block = np.atleast_2d(np.asarray(x_block, dtype=float).T).T
    y_block = np.atleast_2d(np.asarray(y_block, dtype=float).T).T
    vals = [pairwise_band_coherence(x_block[:, j], y_block[:, k], lags).value
            for j in range(x_block.shape[1]) for k in range(y_block.shape[1])]
    return float(np.mean(vals))


# --- the rescaled-copy model ------------------------------------------------

RESCALED_AR = (0.85, -0.73)
RESCALED_NOISE_VAR = 1e-4
_SETTLE_PAD = 2048


def rescaled_copy_model(length: int = 384, seed=None, P: int = 4):
    """X_1 is AR(2) driven by tiny white noise, X_j (j > 1) is white noise, Y_j = (j/10) X_j.

    Returns ``(X, Y)``, each of shape (length + 2 * pad, P), where the pad
    gives the zero-phase filter room; crop with :func:`crop_padding` after
    filtering.
    """
    rng = np.random.default_rng(seed)
    n = length + 2 * _SETTLE_PAD
    W = rng.normal(0.0, np.sqrt(RESCALED_NOISE_VAR), size=(n + 500, P))
    X = W.copy()
    X[:, 0] = signal.lfilter([1.0], [1.0, -RESCALED_AR[0], -RESCALED_AR[1]], W[:, 0])
    X = X[500:]
    Y = X * (np.arange(1, P + 1) / 10.0)
    return X, Y


def crop_padding(series, length: int = 384):
    return series[_SETTLE_PAD:_SETTLE_PAD + length]


@dataclass(frozen=True)
class CoherenceComparison:
    canonical: float
    equal_weights: float
    pca: float
    mean_pairwise: float

    def as_dict(self) -> dict:
        return {"canonical": self.canonical, "equal_weights": self.equal_weights,
                "pca": self.pca, "mean_pairwise": self.mean_pairwise}


def compare_summaries(X, Y, lags: LagGrid, kind=EstimatorKind.KENDALL) -> CoherenceComparison:
    """All four group-level coherence summaries for already filtered X and Y."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    gamma = estimate_gamma(np.hstack([X, Y]), kind, lags, X.shape[1])
    canonical = solve_cbc(gamma).kappa
    equal = pairwise_band_coherence(aggregate_equal_weights(X), aggregate_equal_weights(Y), lags).value
    pca = pairwise_band_coherence(aggregate_pca(X), aggregate_pca(Y), lags).value
    mean_pair = mean_pairwise_coherence(X, Y, lags)
    return CoherenceComparison(canonical, equal, pca, mean_pair)


def rescaled_copy_study(replicates: int = 100, seed: int = 0, band: FrequencyBand | str = "theta",
                        length: int = 384, lags: LagGrid = LagGrid(3), sampling_rate: float = 128.0,
                        order: int = DEFAULT_ORDER) -> list[CoherenceComparison]:
    """Repeat :func:`compare_summaries` on independent draws of the rescaled-copy model."""
    if isinstance(band, str):
        band = get_band(band, sampling_rate)
    filt = design_butterworth(band, order)
    if _SETTLE_PAD < filt.settling_length:
        raise InvalidArgumentError("band too narrow for the simulation padding")
    seeds = np.random.SeedSequence(seed).generate_state(replicates)
    out = []
    for s in seeds:
        X, Y = rescaled_copy_model(length, int(s))
        Xf = crop_padding(signal.sosfiltfilt(filt.sos, X, axis=0), length)
        Yf = crop_padding(signal.sosfiltfilt(filt.sos, Y, axis=0), length)
        out.append(compare_summaries(Xf, Yf, lags))
    return out
