"""Lagged cross-dependence matrices of band-filtered channels.

Entry ``[j, k]`` of the matrix at lag ``l`` estimates
``Cor(Z_j(t), Z_k(t + l))``. Only lags ``0..L`` are stored; negative lags
are transposes because ``Gamma(-l) = Gamma(l).T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kendall import concordance_score, lagged_scores
from .errors import (DegenerateChannelError, InsufficientDataError,
                     InvalidArgumentError)
from .mcd import fast_mcd, subset_size
from .types import EstimatorKind, LagGrid

MIN_OVERLAP = 8
PSD_FLOOR = 1e-6


@dataclass(frozen=True)
class LaggedDependenceMatrix:
    """Per-lag dependence matrices with the X/Y block boundary.

    ``marginals`` optionally maps a signed lag to the ``(XX, YY)`` same-time
    blocks that belong with that lag's cross block, for estimators that fit
    each lag separately. Without it every lag is standardized by the lag-0
    blocks.
    """

    per_lag: np.ndarray  # (L + 1, D, D)
    split: int
    marginals: dict | None = None

    @property
    def dim(self) -> int:
        return self.per_lag.shape[1]

    @property
    def max_lag(self) -> int:
        return self.per_lag.shape[0] - 1

    def at(self, lag: int) -> np.ndarray:
        if abs(lag) > self.max_lag:
            raise InvalidArgumentError(f"lag {lag} outside the stored grid +-{self.max_lag}")
        return self.per_lag[lag] if lag >= 0 else self.per_lag[-lag].T

    def blocks(self, lag: int):
        """``(XX, XY, YX, YY)`` blocks of the matrix at ``lag``."""
        g, p = self.at(lag), self.split
        return g[:p, :p], g[:p, p:], g[p:, :p], g[p:, p:]

    def standardizers(self, lag: int):
        """``(XX, YY)`` blocks used to standardize the cross block at ``lag``."""
        if self.marginals is not None and lag in self.marginals:
            return self.marginals[lag]
        xx, _, _, yy = self.blocks(0)
        return xx, yy

    def with_lag0(self, gamma0: np.ndarray) -> "LaggedDependenceMatrix":
        per_lag = self.per_lag.copy()
        per_lag[0] = gamma0
        marginals = None
        if self.marginals is not None:
            p = self.split
            marginals = {k: v for k, v in self.marginals.items() if k != 0}
            marginals[0] = (gamma0[:p, :p], gamma0[p:, p:])
        return LaggedDependenceMatrix(per_lag, self.split, marginals)


def _sine_transform(score, n):
    return np.sin(np.pi * score / (2.0 * (n * (n - 1) / 2)))


def _aligned(a, b, lag):
    T = a.shape[0]
    if lag >= 0:
        return a[:T - lag], b[lag:]
    return a[-lag:], b[:T + lag]


def kendall_tau_lagged(a, b, lag: int = 0) -> float:
    """Sine-transformed Kendall concordance between ``a(t)`` and ``b(t + lag)``."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError("a and b must be 1-D sequences of equal length")
    T = a.shape[0]
    if abs(lag) >= T - 1 or T - abs(lag) < MIN_OVERLAP:
        raise InsufficientDataError(f"overlap at lag {lag} is {T - abs(lag)}, need >= {MIN_OVERLAP}")
    x, y = _aligned(a, b, lag)
    n = x.shape[0]
    return float(_sine_transform(concordance_score(x.copy(), y.copy()), n))


def _check_channels(block):
    spread = np.ptp(block, axis=0)
    bad = np.flatnonzero(~(spread > 0))
    if bad.size:
        raise DegenerateChannelError(int(bad[0]))


def kendall_gamma(block, max_lag: int) -> np.ndarray:
    T = block.shape[0]
    scores = lagged_scores(np.ascontiguousarray(block, dtype=float), max_lag)
    n = T - np.arange(max_lag + 1)
    out = _sine_transform(scores, n[:, None, None].astype(float))
    np.fill_diagonal(out[0], 1.0)
    return out


def pearson_gamma(block, max_lag: int) -> np.ndarray:
    """Lagged correlation with lag-0 variances in the denominator (1/T scaling)."""
    T, D = block.shape
    z = block - block.mean(axis=0)
    out = np.empty((max_lag + 1, D, D))
    for lag in range(max_lag + 1):
        out[lag] = z[:T - lag].T @ z[lag:] / T
    scale = np.sqrt(np.diag(out[0]))
    out /= scale[None, :, None] * scale[None, None, :]
    out[0] = (out[0] + out[0].T) / 2
    np.fill_diagonal(out[0], 1.0)
    return out


def _mcd_correlation(cols, support_fraction, seed):
    cov = fast_mcd(cols, support_fraction, seed=seed).covariance
    s = np.sqrt(np.diag(cov))
    out = cov / np.outer(s, s)
    out = (out + out.T) / 2
    np.fill_diagonal(out, 1.0)
    return out


def mcd_gamma(block, lag: int, split: int, support_fraction: float = 0.75, seed=0) -> np.ndarray:
    """Robust correlation matrix of ``(X(t), Y(t + lag))`` from a reweighted MCD fit.

    The X columns are the first ``split`` columns of ``block``. The result is
    D x D: its XY block estimates the lagged cross-correlation, while its XX
    and YY blocks are same-time correlations from the same fit. Negative
    lags shift Y backwards.
    """
    block = np.asarray(block, dtype=float)
    T, D = block.shape
    if not 1 <= split < D:
        raise InvalidArgumentError("split must satisfy 1 <= P < D")
    subset_size(T - abs(lag), support_fraction)
    x, y = _aligned(block[:, :split], block[:, split:], lag)
    return _mcd_correlation(np.hstack([x, y]), support_fraction, seed)


def mcd_lagged(block, max_lag: int, split: int, support_fraction: float = 0.75, seed=0):
    """Stack of MCD matrices for lags ``0..max_lag`` and each fit's own marginals.

    Lag ``l > 0`` combines two fits: the XY block comes from
    ``(X(t), Y(t + l))`` and the YX block from ``(X(t + l), Y(t))``; the
    stored same-time XX and YY blocks are averaged over the two fits. The
    second return value maps each signed lag to the XX and YY blocks of the
    fit that produced its cross block.
    """
    seeds = np.random.SeedSequence(seed).generate_state(2 * max_lag + 1)
    D = np.asarray(block).shape[1]
    p = split
    out = np.empty((max_lag + 1, D, D))
    out[0] = mcd_gamma(block, 0, split, support_fraction, int(seeds[0]))
    marginals = {0: (out[0][:p, :p], out[0][p:, p:])}
    for lag in range(1, max_lag + 1):
        fwd = mcd_gamma(block, lag, split, support_fraction, int(seeds[2 * lag - 1]))
        bwd = mcd_gamma(block, -lag, split, support_fraction, int(seeds[2 * lag]))
        g = (fwd + bwd) / 2
        g[:p, p:] = fwd[:p, p:]
        g[p:, :p] = bwd[:p, p:].T
        out[lag] = g
        marginals[lag] = (fwd[:p, :p], fwd[p:, p:])
        marginals[-lag] = (bwd[:p, :p], bwd[p:, p:])
    return out, marginals


def estimate_gamma(block, kind: EstimatorKind | str, lags: LagGrid, split: int,
                   support_fraction: float = 0.75, seed=0) -> LaggedDependenceMatrix:
    """Estimate the lagged dependence matrix of one filtered trial."""
    kind = EstimatorKind.parse(kind)
    block = np.asarray(block, dtype=float)
    T, D = block.shape
    L = lags.max_lag
    if T <= 2 * L + MIN_OVERLAP:
        raise InsufficientDataError(f"trial of {T} samples too short for lags +-{L}")
    _check_channels(block)
    if kind is EstimatorKind.KENDALL:
        return LaggedDependenceMatrix(kendall_gamma(block, L), split)
    if kind is EstimatorKind.PEARSON:
        return LaggedDependenceMatrix(pearson_gamma(block, L), split)
    per_lag, marginals = mcd_lagged(block, L, split, support_fraction, seed)
    return LaggedDependenceMatrix(per_lag, split, marginals)


def repair_psd(gamma0, floor: float = PSD_FLOOR) -> np.ndarray:
    """Nearest-ish correlation matrix with eigenvalues at least ``floor``.

    Returns the input unchanged when it already satisfies the floor.
    Otherwise negative directions are clipped to ``floor`` and the unit
    diagonal restored, repeating until the minimum eigenvalue is at least
    ``floor / 2``.
    """
    g = np.array(gamma0, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InvalidArgumentError("repair_psd needs a square matrix")
    if np.max(np.abs(g - g.T), initial=0.0) > 1e-10:
        raise InvalidArgumentError("repair_psd needs a symmetric matrix")
    if np.linalg.eigvalsh(g)[0] >= floor:
        return g
    for _ in range(100):
        w, v = np.linalg.eigh((g + g.T) / 2)
        g = (v * np.maximum(w, floor)) @ v.T
        d = np.sqrt(np.diag(g))
        g = g / np.outer(d, d)
        g = (g + g.T) / 2
        np.fill_diagonal(g, 1.0)
        if np.linalg.eigvalsh(g)[0] >= floor / 2:
            break
    return g


def repair_lagged(gamma: LaggedDependenceMatrix, floor: float = PSD_FLOOR) -> LaggedDependenceMatrix:
    """Make every lag's joint correlation matrix of ``(X(t), Y(t + l))`` PSD.

    Entrywise estimates at different lags need not combine into a valid
    joint matrix, in which case the canonical coherence at that lag could
    exceed one. Lags whose joint matrix already satisfies the floor are left
    untouched; the others are replaced by :func:`repair_psd` of the joint,
    whose cross block and diagonal blocks are then used for that lag.
    """
    p = gamma.split
    per_lag = gamma.per_lag.copy()
    marginals = dict(gamma.marginals) if gamma.marginals is not None else {}
    changed = False
    for lag in range(-gamma.max_lag, gamma.max_lag + 1):
        if lag == 0:
            continue
        xx, yy = gamma.standardizers(lag)
        xy = gamma.blocks(lag)[1]
        joint = np.block([[xx, xy], [xy.T, yy]])
        joint = (joint + joint.T) / 2
        if np.linalg.eigvalsh(joint)[0] >= floor:
            continue
        fixed = repair_psd(joint, floor)
        if lag > 0:
            per_lag[lag][:p, p:] = fixed[:p, p:]
        else:
            per_lag[-lag][p:, :p] = fixed[:p, p:].T
        marginals[lag] = (fixed[:p, :p], fixed[p:, p:])
        changed = True
    if not changed:
        return gamma
    return LaggedDependenceMatrix(per_lag, p, marginals)
