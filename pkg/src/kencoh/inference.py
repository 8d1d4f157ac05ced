"""Two-state comparison of canonical directions.

The statistic is the unequal-covariance two-sample Hotelling form

    K = (m0 - m1)' (J0 / n0 + J1 / n1)^-1 (m0 - m1)

on per-trial direction vectors, calibrated by permuting the state labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientTrialsError, InvalidArgumentError
from .types import FrequencyBand

DEFAULT_PERMUTATIONS = 5000
COND_LIMIT = 1e12
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class StateComparison:
    band: FrequencyBand | None
    group_means: tuple
    group_covs: tuple
    statistic: float
    permutations: int
    p_value: float
    ridge: bool = False
    null_statistics: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "band": None if self.band is None else self.band.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "permutations": self.permutations,
            "ridge": self.ridge,
            "group_means": [m.tolist() for m in self.group_means],
        }


def _group_moments(X):
    n = X.shape[-2]
    mean = X.mean(axis=-2)
    centred = X - mean[..., None, :]
    cov = np.swapaxes(centred, -1, -2) @ centred / (n - 1)
    return mean, cov


def _quadratic_form(diff, pooled):
    """``diff' pooled^-1 diff`` for a batch, with the conditional ridge."""
    w, v = np.linalg.eigh(pooled)
    w_max = w[..., -1]
    ridge = ~(w[..., 0] * COND_LIMIT > w_max)
    if ridge.any():
        D = pooled.shape[-1]
        shift = RIDGE_SCALE * np.trace(pooled, axis1=-2, axis2=-1) / D
        w = w + np.where(ridge, shift, 0.0)[..., None]
    proj = np.einsum("...ij,...i->...j", v, diff)
    return (proj ** 2 / w).sum(axis=-1), ridge


def hotelling_details(dirs0, dirs1):
    """Statistic, group means, group covariances and ridge flag."""
    X0 = np.atleast_2d(np.asarray(dirs0, dtype=float))
    X1 = np.atleast_2d(np.asarray(dirs1, dtype=float))
    D = X0.shape[1]
    if X1.shape[1] != D:
        raise InvalidArgumentError("direction vectors of both groups need the same length")
    n0, n1 = X0.shape[0], X1.shape[0]
    if min(n0, n1) < D + 2:
        raise InsufficientTrialsError(f"groups of {n0} and {n1} trials; need at least D + 2 = {D + 2} each")
    m0, J0 = _group_moments(X0)
    m1, J1 = _group_moments(X1)
    K, ridge = _quadratic_form(m0 - m1, J0 / n0 + J1 / n1)
    return float(K), (m0, m1), (J0, J1), bool(ridge)


def hotelling_k(dirs0, dirs1) -> float:
    return hotelling_details(dirs0, dirs1)[0]


def _permuted_statistics(B, labels, permutations, rng, chunk=256):
    n0 = int(np.sum(labels == 0))
    N = B.shape[0]
    out = np.empty(permutations)
    done = 0
    while done < permutations:
        m = min(chunk, permutations - done)
        order = np.argsort(rng.random((m, N)), axis=1)
        g0 = B[order[:, :n0]]
        g1 = B[order[:, n0:]]
        mean0, cov0 = _group_moments(g0)
        mean1, cov1 = _group_moments(g1)
        out[done:done + m], _ = _quadratic_form(mean0 - mean1, cov0 / n0 + cov1 / (N - n0))
        done += m
    return out


def permutation_test(directions, labels, permutations: int = DEFAULT_PERMUTATIONS,
                     seed=0, band: FrequencyBand | None = None) -> StateComparison:
    """Permutation p-value of the Hotelling statistic under label exchange.

    ``directions`` is an (N, D) array of per-trial direction vectors and
    ``labels`` the N state labels. Permutations keep the group sizes.
    """
    B = np.asarray(directions, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if permutations < 100:
        raise InvalidArgumentError("use at least 100 permutations")
    if B.ndim != 2 or B.shape[0] != labels.shape[0]:
        raise InvalidArgumentError("need one direction vector per label")
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise InsufficientTrialsError("both states must be present")
    K, means, covs, ridge = hotelling_details(B[labels == 0], B[labels == 1])
    rng = np.random.default_rng(seed)
    null = _permuted_statistics(B, labels, permutations, rng)
    p = (1 + np.count_nonzero(null >= K)) / (1 + permutations)
    return StateComparison(band, means, covs, K, permutations, float(p), ridge, null)


def fdr_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise InvalidArgumentError("p-values must be a 1-D sequence")
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidArgumentError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adjusted, 1.0)
    return out


def fisher_aggregate(p_values) -> tuple[float, float]:
    """Fisher's combined statistic ``-2 sum log p`` and its chi-square tail."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidArgumentError("need a non-empty 1-D sequence of p-values")
    if np.any(~(p > 0)) or np.any(p > 1):
        raise InvalidArgumentError("Fisher aggregation needs p-values in (0, 1]")
    statistic = float(-2.0 * np.log(p).sum())
    return statistic, float(stats.chi2.sf(statistic, 2 * p.size))


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""
