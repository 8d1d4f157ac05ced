"""Reweighted minimum covariance determinant (FAST-MCD).

All random starts are carried through the concentration steps together as
a batch of covariance matrices, which keeps the per-fit cost low enough for
Monte Carlo power studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateDataError, InvalidConfigurationError

N_STARTS = 50
N_REFINED = 10
MAX_CSTEPS = 100
DET_TOL = 1e-9
REWEIGHT_QUANTILE = 0.975
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class MCDFit:
    location: np.ndarray
    covariance: np.ndarray
    raw_location: np.ndarray
    raw_covariance: np.ndarray
    support: np.ndarray
    weights: np.ndarray


def subset_size(n: int, support_fraction: float) -> int:
    h = math.ceil(support_fraction * n)
    if not n / 2 < h < n:
        raise InvalidConfigurationError(
            f"support fraction {support_fraction} gives h={h}, need {n}/2 < h < {n}"
        )
    return h


def _batch_moments(data, idx):
    sub = data[idx]                       # (S, h, p)
    mu = sub.mean(axis=1)
    centred = sub - mu[:, None, :]
    cov = np.swapaxes(centred, 1, 2) @ centred / (idx.shape[1] - 1)
    return mu, cov


def _batch_logdet(cov):
    """Log-determinants, ``-inf`` for covariances that are singular to rounding."""
    w = np.linalg.eigvalsh(cov)
    regular = w[..., 0] > SINGULAR_RTOL * np.maximum(w[..., -1], np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        logdet = np.log(np.where(regular[..., None], w, 1.0)).sum(axis=-1)
    return np.where(regular, logdet, -np.inf)


def _batch_mahalanobis(data, mu, cov):
    centred = data[None, :, :] - mu[:, None, :]          # (S, n, p)
    prec = np.linalg.inv(cov)
    return ((centred @ prec) * centred).sum(axis=2)


def _initial_subsets(data, h, n_starts, seed):
    """h-subsets from one C-step off random elemental (p + 1)-point fits."""
    n, p = data.shape
    perms = np.stack([np.random.default_rng(child).permutation(n)
                      for child in np.random.SeedSequence(seed).spawn(n_starts)])
    k = p + 1
    mu, cov = _batch_moments(data, perms[:, :k])
    singular = ~np.isfinite(_batch_logdet(cov))
    for s in np.flatnonzero(singular):
        # grow the elemental subset until its covariance is nonsingular
        for size in range(k + 1, h + 1):
            m, c = _batch_moments(data, perms[s:s + 1, :size])
            if np.isfinite(_batch_logdet(c)[0]):
                mu[s], cov[s] = m[0], c[0]
                singular[s] = False
                break
    mu, cov = mu[~singular], cov[~singular]
    if not len(mu):
        return np.empty((0, h), dtype=int)
    d2 = _batch_mahalanobis(data, mu, cov)
    return np.argpartition(d2, h - 1, axis=1)[:, :h]


def fast_mcd(data, support_fraction: float = 0.75, n_starts: int = N_STARTS, seed=0) -> MCDFit:
    """Reweighted MCD location and scatter of the rows of ``data``."""
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    h = subset_size(n, support_fraction)
    idx = _initial_subsets(data, h, n_starts, seed)
    if not len(idx):
        raise DegenerateDataError("every MCD start produced a singular covariance")

    mu, cov = _batch_moments(data, idx)
    logdet = _batch_logdet(cov)
    active = np.isfinite(logdet)
    if not active.any():
        raise DegenerateDataError("every MCD start produced a singular covariance")
    idx, mu, cov, logdet = idx[active], mu[active], cov[active], logdet[active]

    for step in range(MAX_CSTEPS):
        if step == 2 and len(logdet) > N_REFINED:
            # only the most promising starts are iterated to convergence
            keep = np.argsort(logdet)[:N_REFINED]
            idx, mu, cov, logdet = idx[keep], mu[keep], cov[keep], logdet[keep]
        d2 = _batch_mahalanobis(data, mu, cov)
        new_idx = np.argpartition(d2, h - 1, axis=1)[:, :h]
        new_mu, new_cov = _batch_moments(data, new_idx)
        new_logdet = _batch_logdet(new_cov)
        ok = np.isfinite(new_logdet)
        if not ok.all():
            # a singular h-subset is an exact fit; keep the previous iterate
            new_idx[~ok], new_mu[~ok], new_cov[~ok], new_logdet[~ok] = idx[~ok], mu[~ok], cov[~ok], logdet[~ok]
        # relative determinant change
        change = np.abs(np.expm1(new_logdet - logdet))
        idx, mu, cov, logdet = new_idx, new_mu, new_cov, new_logdet
        if np.all(change < DET_TOL):
            break

    best = int(np.argmin(logdet))
    raw_mu, raw_cov = mu[best], cov[best]
    support = np.sort(idx[best])

    # consistency at the normal model for the raw h-subset estimate
    q = stats.chi2.ppf(h / n, p)
    raw_cov = raw_cov * (h / n) / stats.chi2.cdf(q, p + 2)

    d2 = _batch_mahalanobis(data, raw_mu[None], raw_cov[None])[0]
    cutoff = stats.chi2.ppf(REWEIGHT_QUANTILE, p)
    weights = (d2 <= cutoff).astype(float)
    wsum = weights.sum()
    if wsum <= p:
        raise DegenerateDataError("too few points survive MCD reweighting")
    loc = weights @ data / wsum
    centred = data - loc
    k1 = REWEIGHT_QUANTILE / stats.chi2.cdf(cutoff, p + 2)
    scatter = k1 * (centred * weights[:, None]).T @ centred / wsum
    return MCDFit(loc, scatter, raw_mu, raw_cov, support, weights)
