"""Numba kernels for Kendall's concordance count.

``concordance_score`` returns q - q', the number of concordant minus
discordant pairs, in O(n log n) using Knight's algorithm: sort by the first
variable (ties broken by the second), then count the inversions left in the
second variable with a bottom-up merge sort. Tied pairs count as neither
concordant nor discordant.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _count_ties(sorted_values):
    n = sorted_values.shape[0]
    ties = 0
    run = 1
    for i in range(1, n):
        if sorted_values[i] == sorted_values[i - 1]:
            run += 1
        else:
            ties += run * (run - 1) // 2
            run = 1
    ties += run * (run - 1) // 2
    return ties


@njit(cache=True)
def _merge_sort_swaps(values):
    """Sort ``values`` in place and return the number of strict inversions."""
    n = values.shape[0]
    buf = np.empty_like(values)
    src = values
    dst = buf
    swaps = 0
    width = 1
    while width < n:
        start = 0
        while start < n:
            mid = min(start + width, n)
            stop = min(start + 2 * width, n)
            i = start
            j = mid
            k = start
            while i < mid and j < stop:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    swaps += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < stop:
                dst[k] = src[j]
                j += 1
                k += 1
            start += 2 * width
        src, dst = dst, src
        width *= 2
    if src is not values:
        values[:] = src
    return swaps


@njit(cache=True)
def concordance_score(x, y):
    n = x.shape[0]
    order = np.argsort(y, kind="mergesort")
    order = order[np.argsort(x[order], kind="mergesort")]
    xs = x[order]
    ys = y[order]

    n0 = n * (n - 1) // 2
    n1 = _count_ties(xs)
    # pairs tied in both coordinates
    n3 = 0
    run = 1
    for i in range(1, n):
        if xs[i] == xs[i - 1] and ys[i] == ys[i - 1]:
            run += 1
        else:
            n3 += run * (run - 1) // 2
            run = 1
    n3 += run * (run - 1) // 2

    swaps = _merge_sort_swaps(ys)
    n2 = _count_ties(ys)
    return n0 - n1 - n2 + n3 - 2 * swaps


@njit(cache=True)
def _has_ties(sorted_values):
    for i in range(1, sorted_values.shape[0]):
        if sorted_values[i] == sorted_values[i - 1]:
            return True
    return False


@njit(cache=True)
def _scores_against(x, others):
    """q - q' of ``x`` against every column of ``others``.

    The sort of ``x`` is shared across columns; tie handling falls back to
    the general routine.
    """
    n = x.shape[0]
    m = others.shape[1]
    out = np.empty(m, dtype=np.int64)
    order = np.argsort(x, kind="mergesort")
    if _has_ties(x[order]):
        for k in range(m):
            out[k] = concordance_score(x, others[:, k].copy())
        return out
    n0 = n * (n - 1) // 2
    for k in range(m):
        ys = others[:, k][order]
        swaps = _merge_sort_swaps(ys)
        out[k] = n0 - _count_ties(ys) - 2 * swaps
    return out


@njit(cache=True)
def lagged_scores(block, max_lag):
    """q - q' for every (lag, j, k) with lag in 0..max_lag.

    Entry ``[l, j, k]`` pairs column j at time t with column k at time t + l.
    The lag-0 slice is filled symmetrically with the diagonal left at zero.
    """
    T, D = block.shape
    out = np.zeros((max_lag + 1, D, D), dtype=np.int64)
    for j in range(D - 1):
        s = _scores_against(block[:, j].copy(), block[:, j + 1:])
        for k in range(j + 1, D):
            out[0, j, k] = s[k - j - 1]
            out[0, k, j] = s[k - j - 1]
    for lag in range(1, max_lag + 1):
        for j in range(D):
            out[lag, j] = _scores_against(block[:T - lag, j].copy(), block[lag:])
    return out
