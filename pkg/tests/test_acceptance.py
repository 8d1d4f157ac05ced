"""Acceptance checks for the whole package.

Each test prints a single ``criterion N: PASS|FAIL ...`` line, repeated in
the terminal summary. Monte Carlo criteria use meta-run seeds 0..19, fixed
before any of them was run.
"""

import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from kencoh._kendall import concordance_score
from kencoh.bandfilter import (band_power_fraction, design_butterworth,
                               filter_zero_phase)
from kencoh.baselines import rescaled_copy_study
from kencoh.cbc import per_trial_directions, solve_cbc
from kencoh.depmat import LaggedDependenceMatrix, kendall_tau_lagged
from kencoh.inference import fisher_aggregate, hotelling_k
from kencoh.simgen import (PowerCell, PowerDesign, SimulationScenario,
                           analytical_cbc, gen_scenario, power_study,
                           quadratic_kappa_2x2)
from kencoh.types import LagGrid, standard_bands
from oracles import (brute_concordance_vectorized, random_correlation,
                     refined_search_cbc)

META_SEEDS = range(20)
DESK = PowerDesign(num_trials=60, trial_length=384)
REPLICATES = 20
PERMUTATIONS = 500


def report(number, ok, detail, elapsed):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f} s)"
    print(line)
    ACCEPTANCE_LINES.append(line)


def log_tail(row):
    """Fisher log tail probability, exact even where the tail underflows."""
    return stats.chi2.logsf(row.p_tilde, 2 * row.replicates)


def test_criterion_1_kendall_matches_brute_force():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        T = int(rng.integers(20, 201))
        lag = int(rng.integers(-10, 11))
        a = rng.permutation(T) + rng.uniform(0, 0.5, T)    # tie-free
        b = rng.permutation(T) + rng.uniform(0, 0.5, T)
        x, y = (a[:T - lag], b[lag:]) if lag >= 0 else (a[-lag:], b[:T + lag])
        n = len(x)
        score = brute_concordance_vectorized(x, y)
        expected = np.sin(np.pi * score / (2.0 * (n * (n - 1) / 2)))
        fast_score = concordance_score(x, y)
        if fast_score != score or kendall_tau_lagged(a, b, lag) != expected:
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    report(1, ok, f"{mismatches} mismatches in 1000 instances", elapsed)
    assert ok


@pytest.mark.slow
def test_criterion_2_eigen_solver_beats_random_search():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    below, worst_margin = 0, 0.0
    for _ in range(200):
        P, Q = (int(k) for k in rng.integers(1, 5, 2))
        g = random_correlation(P + Q, rng)
        kappa = solve_cbc(LaggedDependenceMatrix(g[None], P)).kappa
        best = refined_search_cbc(g[:P, :P], g[:P, P:], g[P:, P:], rng)
        margin = kappa - best
        below += margin < -1e-12          # rounding slack only
        worst_margin = max(worst_margin, margin)
    elapsed = time.perf_counter() - start
    ok = below == 0 and worst_margin < 1e-4 and elapsed < 120
    report(2, ok, f"{below} instances below the search, largest margin {worst_margin:.2e}", elapsed)
    assert ok


def test_criterion_3_analytical_oracle():
    start = time.perf_counter()
    bands = standard_bands(128.0)
    root_err, est_err = [], []
    for i in range(20):
        rng = np.random.default_rng(i)
        m = i % 5
        E = np.zeros((4, 5))
        E[:, m] = rng.uniform(0.3, 1.0, 4) * rng.choice([-1.0, 1.0], 4)
        exact = analytical_cbc(E, m, 1.0, 2).kappa
        root_err.append(abs(quadratic_kappa_2x2(E, m) - exact))
        data = gen_scenario(SimulationScenario(E, E, 2, trial_length=16384, num_trials=2, seed=i))
        est = per_trial_directions(data, bands[m], "kendall", LagGrid(0))[0].result.kappa
        est_err.append(abs(est - exact))
    elapsed = time.perf_counter() - start
    ok = max(root_err) < 1e-8 and np.mean(est_err) < 0.05 and elapsed < 300
    report(3, ok, f"quadratic gap {max(root_err):.1e}, Kendall MAE {np.mean(est_err):.4f}", elapsed)
    assert ok


def test_criterion_4_filter_contract():
    start = time.perf_counter()
    noise = np.random.default_rng(0).standard_normal(4096)
    fractions = {}
    for band in standard_bands(128.0):
        out = filter_zero_phase(noise, design_butterworth(band))
        fractions[band.name] = band_power_fraction(out, band)
    elapsed = time.perf_counter() - start
    ok = min(fractions.values()) >= 0.95 and elapsed < 5
    detail = ", ".join(f"{k} {v:.3f}" for k, v in fractions.items())
    report(4, ok, detail, elapsed)
    assert ok


@pytest.mark.slow
def test_criterion_5_null_calibration():
    start = time.perf_counter()
    tails = []
    for seed in META_SEEDS:
        row, = power_study([PowerCell("gaussian", "linear", 0.0)], REPLICATES, PERMUTATIONS,
                           seed, estimators=["kendall"], design=DESK)
        assert not row.errors, row.errors
        tails.append(row.tail_prob)
    elapsed = time.perf_counter() - start
    kept = sum(t > 0.05 for t in tails)
    ok = kept >= 18 and elapsed < 1800
    report(5, ok, f"tail > 0.05 in {kept}/20 meta-runs, min tail {min(tails):.3f}", elapsed)
    assert ok


@pytest.mark.slow
def test_criterion_6_robustness_ordering():
    start = time.perf_counter()
    wins, pairs = 0, []
    for seed in META_SEEDS:
        rows = power_study([PowerCell("cauchy", "linear", 0.4)], REPLICATES, PERMUTATIONS,
                           seed, estimators=["kendall", "pearson"], design=DESK)
        by = {r.estimator: r for r in rows}
        assert not by["kendall"].errors and not by["pearson"].errors
        wins += log_tail(by["kendall"]) < log_tail(by["pearson"])
        pairs.append((by["kendall"].tail_prob, by["pearson"].tail_prob))
    elapsed = time.perf_counter() - start
    ok = wins >= 16 and elapsed < 3600
    median_k, median_p = np.median(pairs, axis=0)
    report(6, ok, f"Kendall tail smaller in {wins}/20 meta-runs, median tails "
                  f"{median_k:.2e} vs {median_p:.2e}", elapsed)
    assert ok


@pytest.mark.slow
def test_criterion_7_nonlinear_detection():
    start = time.perf_counter()
    hits, kendall_rejects, mcd_keeps = 0, 0, 0
    for seed in META_SEEDS:
        rows = power_study([PowerCell("gaussian", "cubic", 1.3)], REPLICATES, PERMUTATIONS,
                           seed, estimators=["kendall", "mcd"], design=DESK)
        by = {r.estimator: r for r in rows}
        k_ok = by["kendall"].tail_prob < 0.05
        m_ok = by["mcd"].tail_prob > 0.5
        kendall_rejects += k_ok
        mcd_keeps += m_ok
        hits += k_ok and m_ok
    elapsed = time.perf_counter() - start
    ok = hits >= 16 and elapsed < 3600
    report(7, ok, f"{hits}/20 meta-runs with Kendall < 0.05 and MCD > 0.5 "
                  f"(Kendall rejects {kendall_rejects}/20, MCD tail > 0.5 in {mcd_keeps}/20)", elapsed)
    assert ok


def test_criterion_8_fisher_distribution():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    R = 20
    draws = [fisher_aggregate(1.0 - rng.random(R))[0] for _ in range(500)]
    ks = stats.kstest(draws, stats.chi2(2 * R).cdf)
    elapsed = time.perf_counter() - start
    ok = ks.pvalue > 0.01 and elapsed < 5
    report(8, ok, f"KS p-value {ks.pvalue:.3f}", elapsed)
    assert ok


def test_criterion_9_hotelling_invariances():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        D = int(rng.integers(1, 7))
        n0, n1 = (int(k) for k in rng.integers(D + 2, 40, 2))
        X0 = rng.standard_normal((n0, D))
        X1 = rng.standard_normal((n1, D)) + rng.normal(0, 0.5, D)
        A = rng.standard_normal((D, D)) + 2 * np.eye(D)
        c = rng.standard_normal(D)
        K = hotelling_k(X0, X1)
        worst = max(worst,
                    abs(hotelling_k(X0, X0.copy())),
                    abs(hotelling_k(X1, X0) - K) / max(K, 1.0),
                    abs(hotelling_k(X0 @ A.T + c, X1 @ A.T + c) - K) / max(K, 1.0))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 10
    report(9, ok, f"largest deviation {worst:.1e} over 100 instances", elapsed)
    assert ok


@pytest.mark.slow
def test_criterion_10_baseline_ordering():
    start = time.perf_counter()
    results = rescaled_copy_study(100, seed=0)
    medians = {k: float(np.median([r.as_dict()[k] for r in results]))
               for k in ("canonical", "equal_weights", "pca", "mean_pairwise")}
    elapsed = time.perf_counter() - start
    ok = all(medians["canonical"] > v for k, v in medians.items() if k != "canonical") and elapsed < 600
    report(10, ok, ", ".join(f"{k} {v:.3f}" for k, v in medians.items()), elapsed)
    assert ok
