"""AR(2)-mixture simulation of two-state multichannel recordings.

Five latent oscillations, one per standard band, are mixed into X and Y
channels:

    X(t) = E_X O(t) + W_X(t)
    Y(t) = E_Y h(O(t)) + W_Y(t)

with a state-specific mixing matrix ``E`` of shape (D, 5). For the linear
link the band-restricted spectral matrix is known in closed form, which gives
the exact canonical coherence and directions used to calibrate effect sizes.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, signal

from .bandfilter import DEFAULT_ORDER, design_butterworth
from .cbc import direction_matrix, per_trial_directions, solve_cbc
from .depmat import LaggedDependenceMatrix
from .errors import (CalibrationError, InternalConsistencyError,
                     InvalidConfigurationError, KencohError,
                     UnsupportedConfigurationError)
from .inference import fisher_aggregate, permutation_test
from .types import (EstimatorKind, FrequencyBand, LagGrid, MultiChannelTrials,
                    standard_bands)

PEAK_HZ = (2.0, 6.0, 10.0, 20.0, 40.0)
DAMPING = 1.05
INNOVATION_SD = 0.5
BURN_IN = 500
N_BANDS = 5


class Link(str, enum.Enum):
    LINEAR = "linear"
    CUBIC = "cubic"


class NoiseCase(str, enum.Enum):
    GAUSSIAN = "gaussian"        # case (a): N(0, 1) everywhere
    SCALED_T3 = "t3"             # case (b): 0.13 t_3 everywhere
    MIXED_CAUCHY = "cauchy"      # case (c): N(0, 1) on X, 0.1 t_1 on Y

    @classmethod
    def parse(cls, value) -> "NoiseCase":
        if isinstance(value, cls):
            return value
        aliases = {"a": cls.GAUSSIAN, "1": cls.GAUSSIAN, "b": cls.SCALED_T3, "2": cls.SCALED_T3,
                   "c": cls.MIXED_CAUCHY, "3": cls.MIXED_CAUCHY}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InvalidConfigurationError(f"unknown noise case {value!r}") from None


NOISE_SCALE = {NoiseCase.GAUSSIAN: 1.0, NoiseCase.SCALED_T3: 0.13, NoiseCase.MIXED_CAUCHY: 0.1}


@dataclass(frozen=True)
class AR2BandConfig:
    """Second-order autoregression with a spectral peak near ``peak_hz``."""

    peak_hz: float
    sampling_rate: float = 128.0
    damping: float = DAMPING
    sigma: float = INNOVATION_SD

    def __post_init__(self):
        if self.damping <= 0:
            raise InvalidConfigurationError("damping must be positive for a stationary AR(2)")
        if not 0 < self.peak_hz < self.sampling_rate / 2:
            raise InvalidConfigurationError("peak frequency must lie in (0, Nyquist)")

    @property
    def zeta(self) -> float:
        return self.peak_hz / self.sampling_rate

    @property
    def phi1(self) -> float:
        return 2.0 * math.exp(-self.damping) * math.cos(2.0 * math.pi * self.zeta)

    @property
    def phi2(self) -> float:
        return -math.exp(-2.0 * self.damping)

    def roots(self) -> np.ndarray:
        """Roots of the characteristic polynomial ``z^2 - phi1 z - phi2``."""
        return np.roots([1.0, -self.phi1, -self.phi2])

    def spectral_density(self, omega) -> np.ndarray:
        """Two-sided density in cycles per sample; integrates to the variance over (-1/2, 1/2)."""
        e = np.exp(-2j * np.pi * np.asarray(omega, dtype=float))
        return self.sigma ** 2 / np.abs(1.0 - self.phi1 * e - self.phi2 * e * e) ** 2


def band_configs(sampling_rate: float = 128.0, damping: float = DAMPING,
                 sigma: float = INNOVATION_SD) -> list[AR2BandConfig]:
    return [AR2BandConfig(p, sampling_rate, damping, sigma) for p in PEAK_HZ]


def _simulate_ar2(config, shape, rng):
    xi = rng.normal(0.0, config.sigma, size=shape)
    return signal.lfilter([1.0], [1.0, -config.phi1, -config.phi2], xi, axis=-1)


def gen_ar2_batch(config: AR2BandConfig, band: FrequencyBand, n_series: int, length: int,
                  rng: np.random.Generator, order: int = DEFAULT_ORDER) -> np.ndarray:
    """``n_series`` independent band-filtered AR(2) series of ``length`` samples.

    Each series runs through a burn-in and is simulated with one settling
    length of padding on either side before zero-phase filtering, so the
    returned samples are free of start-up and edge transients.
    """
    filt = design_butterworth(band, order)
    settle = filt.settling_length
    pad = max(settle, math.ceil((3 * settle - length) / 2))
    total = BURN_IN + 2 * pad + length
    raw = _simulate_ar2(config, (n_series, total), rng)[:, BURN_IN:]
    filtered = signal.sosfiltfilt(filt.sos, raw, axis=-1)
    return filtered[:, pad:pad + length]


def gen_ar2_band(config: AR2BandConfig, length: int, seed=None, band: FrequencyBand | None = None,
                 order: int = DEFAULT_ORDER) -> np.ndarray:
    """One stationary AR(2) sample, bandpass-filtered to ``band``.

    When ``band`` is omitted, the standard band containing the peak is used.
    """
    if length < 256:
        raise InvalidConfigurationError("length must be at least 256")
    if band is None:
        band = band_for_peak(config.peak_hz, config.sampling_rate)
    rng = np.random.default_rng(seed)
    return gen_ar2_batch(config, band, 1, length, rng, order)[0]


def band_for_peak(peak_hz: float, sampling_rate: float) -> FrequencyBand:
    for band in standard_bands(sampling_rate):
        if band.low_hz < peak_hz <= band.high_hz:
            return band
    raise InvalidConfigurationError(f"no standard band contains {peak_hz} Hz")


def random_base_mixing(D: int, seed=0, low: float = 0.3, high: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(low, high, size=(D, N_BANDS))


@dataclass(frozen=True)
class SimulationScenario:
    mixing0: np.ndarray
    mixing1: np.ndarray
    split: int
    link: Link = Link.LINEAR
    noise_case: NoiseCase = NoiseCase.GAUSSIAN
    trial_length: int = 384
    num_trials: int = 300
    sampling_rate: float = 128.0
    seed: int = 0
    noise_scale: float | None = None
    damping: float = DAMPING
    sigma: float = INNOVATION_SD
    filter_order: int = DEFAULT_ORDER
    group1_fraction: float = 0.5

    def __post_init__(self):
        e0 = np.asarray(self.mixing0, dtype=float)
        e1 = np.asarray(self.mixing1, dtype=float)
        if e0.ndim != 2 or e0.shape[1] != N_BANDS or e0.shape != e1.shape:
            raise InvalidConfigurationError("mixing matrices must both be D x 5")
        if not 1 <= self.split < e0.shape[0]:
            raise InvalidConfigurationError("group split must satisfy 1 <= P < D")
        object.__setattr__(self, "mixing0", e0)
        object.__setattr__(self, "mixing1", e1)
        object.__setattr__(self, "link", Link(self.link))
        object.__setattr__(self, "noise_case", NoiseCase.parse(self.noise_case))
        if self.num_trials < 2 or self.trial_length < 16:
            raise InvalidConfigurationError("need at least 2 trials of 16 samples")

    @property
    def D(self) -> int:
        return self.mixing0.shape[0]

    @property
    def scale(self) -> float:
        return NOISE_SCALE[self.noise_case] if self.noise_scale is None else self.noise_scale


def _noise(scn: SimulationScenario, shape, rng):
    N, T, D = shape
    P = scn.split
    if scn.noise_case is NoiseCase.GAUSSIAN:
        return scn.scale * rng.standard_normal(shape)
    if scn.noise_case is NoiseCase.SCALED_T3:
        return scn.scale * rng.standard_t(3, size=shape)
    w = np.empty(shape)
    w[..., :P] = rng.standard_normal((N, T, P))
    w[..., P:] = scn.scale * rng.standard_t(1, size=(N, T, D - P))
    return w


def gen_scenario(scn: SimulationScenario) -> MultiChannelTrials:
    """Simulate a two-state recording; the first half of the trials is state 0."""
    rng = np.random.default_rng(scn.seed)
    N, T, D, P = scn.num_trials, scn.trial_length, scn.D, scn.split
    bands = standard_bands(scn.sampling_rate)
    configs = band_configs(scn.sampling_rate, scn.damping, scn.sigma)
    latent = np.stack([gen_ar2_batch(cfg, band, N, T, rng, scn.filter_order)
                       for cfg, band in zip(configs, bands)], axis=-1)   # (N, T, 5)
    linked = latent ** 3 if scn.link is Link.CUBIC else latent
    n1 = int(round(N * scn.group1_fraction))
    labels = np.zeros(N, dtype=int)
    labels[N - n1:] = 1
    mixing = np.where(labels[:, None, None] == 1, scn.mixing1, scn.mixing0)   # (N, D, 5)
    values = np.empty((N, T, D))
    values[..., :P] = np.einsum("ntm,njm->ntj", latent, mixing[:, :P])
    values[..., P:] = np.einsum("ntm,njm->ntj", linked, mixing[:, P:])
    values += _noise(scn, (N, T, D), rng)
    names = tuple(f"X{j + 1}" for j in range(P)) + tuple(f"Y{j + 1}" for j in range(D - P))
    return MultiChannelTrials(values.reshape(N * T, D), T, N, P, scn.sampling_rate, labels, names)


# --- analytical canonical coherence for the linear link -------------------

@dataclass(frozen=True)
class AnalyticalCBC:
    kappa: float
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    b: np.ndarray
    gamma0: np.ndarray = field(repr=False)

    @property
    def directions(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    @property
    def standardized(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])


def band_power(config: AR2BandConfig, band: FrequencyBand, filter_order: int | None = None) -> float:
    """Positive-frequency power of the latent oscillation within ``band``.

    With ``filter_order=None`` the band acts as an ideal box. Otherwise the
    density is weighted by the zero-phase Butterworth responses the
    simulation and the analysis apply, and integrated over all frequencies.
    """
    lo, hi = band.omega1, band.omega2
    if filter_order is None:
        val, _ = integrate.quad(config.spectral_density, lo, hi, epsrel=1e-8, limit=200)
        return val
    own = band_for_peak(config.peak_hz, config.sampling_rate)
    sim = design_butterworth(own, filter_order)
    ana = design_butterworth(band, filter_order)
    S = config.sampling_rate

    def weighted(w):
        return config.spectral_density(w) * sim.power_gain(w * S)[0] ** 2 * ana.power_gain(w * S)[0] ** 2

    val, _ = integrate.quad(weighted, 0.0, 0.5, epsrel=1e-8, limit=400, points=[lo, hi])
    return val


def noise_band_power(sigma_w: float, band: FrequencyBand, filter_order: int | None = None) -> float:
    if filter_order is None:
        return sigma_w ** 2 * band.bandwidth
    ana = design_butterworth(band, filter_order)
    S = band.sampling_rate
    val, _ = integrate.quad(lambda w: ana.power_gain(w * S)[0] ** 2, 0.0, 0.5,
                            epsrel=1e-8, limit=400, points=[band.omega1, band.omega2])
    return sigma_w ** 2 * val


def band_spectral_matrix(E, band_index: int, sigma_w: float, sampling_rate: float = 128.0,
                         damping: float = DAMPING, sigma: float = INNOVATION_SD,
                         filter_order: int | None = None) -> np.ndarray:
    """Band-integrated spectral matrix ``sum_m z_m e_m e_m' + n I`` of the linear model."""
    E = np.asarray(E, dtype=float)
    band = standard_bands(sampling_rate)[band_index]
    configs = band_configs(sampling_rate, damping, sigma)
    if filter_order is None:
        z = np.zeros(N_BANDS)
        z[band_index] = band_power(configs[band_index], band)
    else:
        z = np.array([band_power(cfg, band, filter_order) for cfg in configs])
    F = (E * z) @ E.T
    F[np.diag_indices_from(F)] += noise_band_power(sigma_w, band, filter_order)
    return F


def analytical_cbc(E, band_index: int, sigma_w: float = 1.0, split: int | None = None, *,
                   link: Link | str = Link.LINEAR, sampling_rate: float = 128.0,
                   damping: float = DAMPING, sigma: float = INNOVATION_SD,
                   filter_order: int | None = None) -> AnalyticalCBC:
    """Exact canonical coherence and directions of the linear mixture at one band.

    The cross-spectrum of the linear model is real and even, so its
    band-restricted lagged covariance peaks at lag 0; the eigenproblem is
    solved there on the correlation-normalised spectral matrix.
    """
    if Link(link) is not Link.LINEAR:
        raise UnsupportedConfigurationError("closed-form coherence exists only for the linear link")
    E = np.asarray(E, dtype=float)
    D = E.shape[0]
    P = D // 2 if split is None else split
    F = band_spectral_matrix(E, band_index, sigma_w, sampling_rate, damping, sigma, filter_order)
    s = np.sqrt(np.diag(F))
    gamma0 = F / np.outer(s, s)
    res = solve_cbc(LaggedDependenceMatrix(gamma0[None], P))
    if P == 2 and D == 4 and filter_order is None:
        root = quadratic_kappa_2x2(E, band_index, sigma_w, sampling_rate, damping, sigma)
        if abs(root - res.kappa) > 1e-8:
            raise InternalConsistencyError(
                f"quadratic root {root:.12f} disagrees with eigen solve {res.kappa:.12f}")
    return AnalyticalCBC(res.kappa, res.u, res.v, res.a, res.b, gamma0)


def quadratic_kappa_2x2(E, band_index: int, sigma_w: float = 1.0, sampling_rate: float = 128.0,
                        damping: float = DAMPING, sigma: float = INNOVATION_SD) -> float:
    """Closed-form coherence for P = Q = 2 with single-band loadings.

    Largest root of ``(k k U1 - L)(k k U2 - L) - (k k U3)^2 = 0`` where
    ``k(x, y) = z n / ((x^2 z + n)(y^2 z + n) - (x y z)^2)`` and
    ``U1 = E1^2 (E3^2 + E4^2)``, ``U2 = E2^2 (E3^2 + E4^2)``,
    ``U3 = E1 E2 (E3^2 + E4^2)`` for the band's loadings ``E1..E4``.
    """
    E = np.asarray(E, dtype=float)
    if E.shape[0] != 4:
        raise InvalidConfigurationError("the quadratic form needs P = Q = 2")
    band = standard_bands(sampling_rate)[band_index]
    z = band_power(band_configs(sampling_rate, damping, sigma)[band_index], band)
    n = sigma_w ** 2 * band.bandwidth
    e1, e2, e3, e4 = E[:, band_index]

    def k(x, y):
        return z * n / ((x * x * z + n) * (y * y * z + n) - (x * y * z) ** 2)

    scale = k(e1, e2) * k(e3, e4)
    ysq = e3 * e3 + e4 * e4
    u1, u2, u3 = scale * e1 * e1 * ysq, scale * e2 * e2 * ysq, scale * e1 * e2 * ysq
    # roots of L^2 - (u1 + u2) L + (u1 u2 - u3^2)
    tr, det = u1 + u2, u1 * u2 - u3 * u3
    return 0.5 * (tr + math.sqrt(max(tr * tr - 4.0 * det, 0.0)))


def direction_distance(u0, v0, u1, v1) -> float:
    """Normalised L2 distance between two states' standardized directions."""
    P, Q = len(u0), len(v0)
    return float(np.linalg.norm(np.subtract(u0, u1)) / math.sqrt(P)
                 + np.linalg.norm(np.subtract(v0, v1)) / math.sqrt(Q))


def _orthogonal_partner(x: np.ndarray) -> np.ndarray:
    """Fixed unit vector orthogonal to ``x`` (alternating-sign template)."""
    t = np.where(np.arange(x.size) % 2 == 0, 1.0, -1.0)
    t = t + np.linspace(0.0, 0.5, x.size)
    t = t - (t @ x) / (x @ x) * x
    nrm = np.linalg.norm(t)
    if nrm < 1e-12:
        t = np.zeros_like(x)
        t[np.argmin(np.abs(x))] = 1.0
        t = t - (t @ x) / (x @ x) * x
        nrm = np.linalg.norm(t)
    return t / nrm


def _rotated(E0, band_index, split, angle):
    E1 = E0.copy()
    col = E0[:, band_index]
    for sl in (slice(0, split), slice(split, None)):
        x = col[sl]
        if x.size < 2 or not np.any(x):
            continue
        E1[sl, band_index] = math.cos(angle) * x + math.sin(angle) * np.linalg.norm(x) * _orthogonal_partner(x)
    return E1


def calibrate_mixing(target_delta, base, band: int, split: int | None = None, sigma_w: float = 1.0,
                     sampling_rate: float = 128.0, tol: float = 1e-3, grid: int = 721):
    """State-1 mixing matrix whose analytical directions sit ``target_delta`` away.

    The band's X and Y loading blocks are rotated by a common angle within a
    fixed plane; the angle is found by scanning and then bracketing a root of
    ``distance(angle) - target``. Columns of other bands are left untouched.
    Returns ``(E0, E1)``.
    """
    E0 = np.asarray(base, dtype=float)
    D = E0.shape[0]
    P = D // 2 if split is None else split
    target = float(np.ravel(target_delta)[band] if np.ndim(target_delta) else target_delta)
    if target < 0:
        raise InvalidConfigurationError("target distance must be non-negative")
    if target == 0:
        return E0, E0.copy()
    bound = 2.0 * (1.0 / math.sqrt(P) + 1.0 / math.sqrt(D - P))
    if target >= bound:
        raise CalibrationError(f"target {target} is beyond the bound {bound:.4f} for unit directions",
                               achieved_max=None)
    ref = analytical_cbc(E0, band, sigma_w, P, sampling_rate=sampling_rate)

    def distance(angle):
        res = analytical_cbc(_rotated(E0, band, P, angle), band, sigma_w, P, sampling_rate=sampling_rate)
        return direction_distance(ref.u, ref.v, res.u, res.v)

    angles = np.linspace(0.0, math.pi, grid)
    values = np.array([distance(a) for a in angles])
    for i in np.flatnonzero((values[:-1] - target) * (values[1:] - target) <= 0):
        lo, hi = angles[i], angles[i + 1]
        try:
            angle = optimize.brentq(lambda a: distance(a) - target, lo, hi, xtol=1e-12)
        except ValueError:
            continue
        if abs(distance(angle) - target) < tol:
            return E0, _rotated(E0, band, P, angle)
    raise CalibrationError(f"could not reach distance {target}; largest achieved {values.max():.4f}",
                           achieved_max=float(values.max()))


# --- power study ------------------------------------------------------------

CSV_COLUMNS = ("case", "link", "delta1", "estimator", "p_tilde", "tail_prob",
               "replicates", "permutations", "seed")
DEFAULT_DELTAS = (0.0, 0.4, 1.1, 1.3)


@dataclass(frozen=True)
class PowerCell:
    noise_case: NoiseCase
    link: Link
    delta1: float

    def __post_init__(self):
        object.__setattr__(self, "noise_case", NoiseCase.parse(self.noise_case))
        object.__setattr__(self, "link", Link(self.link))
        object.__setattr__(self, "delta1", float(self.delta1))


@dataclass(frozen=True)
class PowerDesign:
    """Everything about a power-study replicate except the cell and the seed."""

    D: int = 8
    split: int = 4
    num_trials: int = 300
    trial_length: int = 384
    sampling_rate: float = 128.0
    band_index: int = 0
    max_lag: int = 2
    mixing_seed: int = 0
    sigma_w: float = 1.0
    support_fraction: float = 0.75

    @property
    def band(self) -> FrequencyBand:
        return standard_bands(self.sampling_rate)[self.band_index]


@dataclass
class PowerRow:
    case: str
    link: str
    delta1: float
    estimator: str
    p_tilde: float
    tail_prob: float
    replicates: int
    permutations: int
    seed: int
    p_values: list = field(default_factory=list, repr=False)
    errors: list = field(default_factory=list, repr=False)

    def csv_record(self) -> list[str]:
        return [self.case, self.link, _fmt(self.delta1), self.estimator, _fmt(self.p_tilde),
                _fmt(self.tail_prob), str(self.replicates), str(self.permutations), str(self.seed)]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def default_grid(links=(Link.LINEAR,), deltas=DEFAULT_DELTAS) -> list[PowerCell]:
    return [PowerCell(case, link, d) for link in links for case in NoiseCase for d in deltas]


def cell_mixing(cell: PowerCell, design: PowerDesign):
    base = random_base_mixing(design.D, design.mixing_seed)
    return calibrate_mixing(cell.delta1, base, design.band_index, design.split,
                            design.sigma_w, design.sampling_rate)


def replicate_seeds(seed: int, cell: PowerCell, replicate: int) -> tuple[int, int]:
    """Data and permutation seeds of one replicate.

    They depend only on the root seed, the cell and the replicate index, so
    every estimator sees the same data and results do not depend on
    scheduling.
    """
    key = (list(NoiseCase).index(cell.noise_case), list(Link).index(cell.link),
           int(round(cell.delta1 * 1_000_000)), replicate)
    data_seed, perm_seed = np.random.SeedSequence(seed, spawn_key=key).generate_state(2)
    return int(data_seed), int(perm_seed)


def _replicate_job(args):
    cell, design, E0, E1, replicate, seed, estimators, permutations = args
    data_seed, perm_seed = replicate_seeds(seed, cell, replicate)
    scn = SimulationScenario(E0, E1, design.split, cell.link, cell.noise_case,
                             design.trial_length, design.num_trials, design.sampling_rate, data_seed)
    data = gen_scenario(scn)
    out = {}
    for kind in estimators:
        try:
            trials = per_trial_directions(data, design.band, kind, LagGrid(design.max_lag),
                                          support_fraction=design.support_fraction, seed=data_seed)
            B, labels = direction_matrix(trials)
            out[kind] = permutation_test(B, labels, permutations, perm_seed).p_value
        except KencohError as err:
            out[kind] = err
    return replicate, out


def power_study(cells, replicates: int, permutations: int = 500, seed: int = 0,
                estimators=tuple(EstimatorKind), design: PowerDesign | None = None,
                workers: int = 1) -> list[PowerRow]:
    """Replicated permutation tests per cell, aggregated with Fisher's method.

    Returns one row per (cell, estimator). Replicates whose pipeline fails
    are recorded in ``errors`` and left out of the aggregate; a cell whose
    calibration fails produces rows with NaN statistics.
    """
    if replicates < 5:
        raise InvalidConfigurationError("a power study needs at least 5 replicates")
    design = design or PowerDesign()
    estimators = [EstimatorKind.parse(k) for k in estimators]
    rows = []
    for cell in cells:
        cell = cell if isinstance(cell, PowerCell) else PowerCell(*cell)
        try:
            E0, E1 = cell_mixing(cell, design)
        except KencohError as err:
            rows.extend(PowerRow(cell.noise_case.value, cell.link.value, cell.delta1, k.value,
                                 math.nan, math.nan, 0, permutations, seed, [], [str(err)])
                        for k in estimators)
            continue
        jobs = [(cell, design, E0, E1, r, seed, estimators, permutations) for r in range(replicates)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_replicate_job, jobs))
        else:
            outcomes = [_replicate_job(job) for job in jobs]
        outcomes.sort(key=lambda item: item[0])
        for kind in estimators:
            p_values = [o[kind] for _, o in outcomes if not isinstance(o[kind], KencohError)]
            errors = [f"replicate {r}: {o[kind]}" for r, o in outcomes if isinstance(o[kind], KencohError)]
            if p_values:
                stat, tail = fisher_aggregate(p_values)
            else:
                stat, tail = math.nan, math.nan
            rows.append(PowerRow(cell.noise_case.value, cell.link.value, cell.delta1, kind.value,
                                 stat, tail, len(p_values), permutations, seed, p_values, errors))
    return rows


def write_power_csv(rows, out=None) -> str:
    """Serialize power-study rows; writes to ``out`` (path or file) if given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_record())
    text = buf.getvalue()
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    elif out is not None:
        out.write(text)
    return text
