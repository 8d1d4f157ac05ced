"""Canonical band-coherence between two channel groups.

For each lag the leading eigenpair of

    Gxx^-1/2 Gxy(l) Gyy^-1 Gyx(-l) Gxx^-1/2      (P x P)
    Gyy^-1/2 Gyx(-l) Gxx^-1 Gxy(l) Gyy^-1/2      (Q x Q)

gives the squared canonical correlation and the standardized directions u, v.
The coherence is the maximum over the lag grid; the raw directions are
``a = Gxx^-1/2 u`` and ``b = Gyy^-1/2 v``. Estimators that fit every lag
separately may supply that fit's own XX and YY blocks in place of the lag-0
ones.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bandfilter import DEFAULT_ORDER, design_butterworth, filter_zero_phase
from .depmat import (LaggedDependenceMatrix, estimate_gamma, repair_lagged,
                     repair_psd)
from .errors import (IllConditionedMatrixError, InsufficientDataError,
                     InternalConsistencyError, KencohError, TrialFailure)
from .types import EstimatorKind, FrequencyBand, LagGrid, MultiChannelTrials

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-8
TIE_TOL = 1e-12
DEGENERACY_TOL = 1e-10
KAPPA_SLACK = 1e-6


@dataclass(frozen=True)
class CBCResult:
    kappa: float
    best_lag: int
    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    v: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool = False
    clamped: bool = False

    @property
    def directions(self) -> np.ndarray:
        """The stacked raw direction vector ``(a, b)`` of length P + Q."""
        return np.concatenate([self.a, self.b])

    @property
    def standardized(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])

    def flipped(self, flip_x: bool, flip_y: bool) -> "CBCResult":
        sx = -1.0 if flip_x else 1.0
        sy = -1.0 if flip_y else 1.0
        return CBCResult(self.kappa, self.best_lag, sx * self.a, sy * self.b,
                         sx * self.u, sy * self.v, self.eigenvalues,
                         self.degenerate, self.clamped)


def inv_sqrt_psd(m, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetric inverse square root from the spectral decomposition."""
    m = np.asarray(m, dtype=float)
    w, v = np.linalg.eigh((m + m.T) / 2)
    if w[0] < floor:
        raise IllConditionedMatrixError(float(w[0]), floor)
    return (v / np.sqrt(w)) @ v.T


def sign_canonical(vec: np.ndarray) -> np.ndarray:
    """Flip ``vec`` so its largest-magnitude entry is positive."""
    return vec if vec[np.argmax(np.abs(vec))] >= 0 else -vec


def _leading(sym):
    w, v = np.linalg.eigh((sym + sym.T) / 2)
    return w[::-1], v[:, ::-1]


def solve_cbc(gamma: LaggedDependenceMatrix) -> CBCResult:
    """Maximize the squared canonical correlation over directions and lags."""
    P = gamma.split
    Q = gamma.dim - P
    r = min(P, Q)

    roots = {}
    thetas = {}
    leading = {}
    for lag in range(-gamma.max_lag, gamma.max_lag + 1):
        xx, yy = gamma.standardizers(lag)
        key = (id(xx), id(yy))
        if key not in roots:
            roots[key] = (inv_sqrt_psd(xx), inv_sqrt_psd(yy))
        rx, ry = roots[key]
        theta = rx @ gamma.blocks(lag)[1] @ ry
        thetas[lag] = (theta, rx, ry)
        leading[lag] = np.linalg.eigvalsh(theta @ theta.T)[-1]
    top = max(leading.values())
    # ties: smallest |lag| first, then the positive lag
    lag = min((l for l, lam in leading.items() if lam >= top - TIE_TOL),
              key=lambda l: (abs(l), -l))
    theta, rx, ry = thetas[lag]
    lam_x, vec_x = _leading(theta @ theta.T)
    _, vec_y = _leading(theta.T @ theta)
    eigenvalues = lam_x[:r]
    kappa = float(eigenvalues[0])
    degenerate = r > 1 and eigenvalues[0] - eigenvalues[1] < DEGENERACY_TOL
    clamped = False
    if kappa > 1 + KAPPA_SLACK:
        raise InternalConsistencyError(f"canonical coherence {kappa:.8f} exceeds 1 at lag {lag}")
    if kappa > 1 or kappa < 0:
        clamped = kappa > 1 + 1e-8 or kappa < -1e-8
        if clamped:
            log.info("clamping canonical coherence %.10f into [0, 1]", kappa)
        kappa = min(max(kappa, 0.0), 1.0)
    u = sign_canonical(vec_x[:, 0])
    v = sign_canonical(vec_y[:, 0])
    return CBCResult(kappa, int(lag), rx @ u, ry @ v, u, v, eigenvalues,
                     bool(degenerate), clamped)


@dataclass(frozen=True)
class TrialDirections:
    trial: int
    label: int
    result: CBCResult


def filter_recording(data: MultiChannelTrials, band: FrequencyBand,
                     order: int = DEFAULT_ORDER) -> MultiChannelTrials:
    """Filter the continuous recording channel by channel, then keep the trial layout."""
    filt = design_butterworth(band, order)
    return data.with_values(filter_zero_phase(data.values, filt, axis=0))


def _trial_job(args):
    n, block, kind, max_lag, split, trim, support_fraction, seed = args
    try:
        if trim:
            if block.shape[0] <= 2 * trim:
                raise InsufficientDataError(f"trimming {trim} samples per edge leaves nothing")
            block = block[trim:-trim]
        gamma = estimate_gamma(block, kind, LagGrid(max_lag), split,
                               support_fraction=support_fraction, seed=seed)
        if kind is not EstimatorKind.PEARSON:
            gamma = repair_lagged(gamma.with_lag0(repair_psd(gamma.at(0))))
        return n, solve_cbc(gamma), None
    except KencohError as err:
        return n, None, err


def align_to_group_mean(trials: list[TrialDirections]) -> list[TrialDirections]:
    """Flip each trial's X and Y directions to agree with its group's running mean."""
    out = []
    sums: dict = {}
    for td in trials:
        res = td.result
        sx, sy = sums.get(td.label, (None, None))
        flip_x = sx is not None and float(res.a @ sx) < 0
        flip_y = sy is not None and float(res.b @ sy) < 0
        res = res.flipped(flip_x, flip_y)
        sums[td.label] = (res.a if sx is None else sx + res.a,
                          res.b if sy is None else sy + res.b)
        out.append(TrialDirections(td.trial, td.label, res))
    return out


def per_trial_directions(data: MultiChannelTrials, band: FrequencyBand,
                         kind: EstimatorKind | str, lags: LagGrid, *,
                         order: int = DEFAULT_ORDER, trim: int = 0,
                         prefiltered: bool = False, lenient: bool = False,
                         support_fraction: float = 0.75, seed: int = 0,
                         sign_mode: str = "rule", workers: int = 1) -> list[TrialDirections]:
    """Canonical band-coherence and directions for every trial, in trial order.

    The continuous recording is band-filtered first and then cut into
    trials, because typical trials are shorter than the filter's settling
    time. ``trim`` drops that many samples from both edges of each trial.
    In strict mode (the default) any failing trial aborts the run with a
    :class:`TrialFailure`; with ``lenient=True`` failing trials are dropped
    with a warning.
    """
    kind = EstimatorKind.parse(kind)
    if sign_mode not in ("rule", "group-mean"):
        raise ValueError(f"unknown sign mode {sign_mode!r}")
    filtered = data if prefiltered else filter_recording(data, band, order)
    seeds = np.random.SeedSequence(seed).generate_state(data.num_trials)
    jobs = [(n, filtered.trial(n), kind, lags.max_lag, data.group_split, trim,
             support_fraction, int(seeds[n])) for n in range(data.num_trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = [_trial_job(job) for job in jobs]

    failures = [(n, err) for n, res, err in outcomes if err is not None]
    if failures:
        if not lenient:
            raise TrialFailure(failures)
        for n, err in failures:
            warnings.warn(f"excluding trial {n}: {err}", RuntimeWarning, stacklevel=2)
    results = [TrialDirections(n, int(data.labels[n]), res)
               for n, res, err in outcomes if err is None]
    if sign_mode == "group-mean":
        results = align_to_group_mean(results)
    return results


def direction_matrix(trials: list[TrialDirections], standardized: bool = False):
    """Stack per-trial direction vectors into an (N, D) array plus labels."""
    if standardized:
        B = np.stack([t.result.standardized for t in trials])
    else:
        B = np.stack([t.result.directions for t in trials])
    labels = np.array([t.label for t in trials], dtype=int)
    return B, labels
