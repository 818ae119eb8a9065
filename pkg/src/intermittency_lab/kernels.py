"""Compiled orbit kernels (numba).

Everything here is deterministic given its inputs.  Parallel kernels
only ever write per-orbit rows, so results are identical for any
thread count; cross-orbit aggregation happens in plain numpy in a
fixed order.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _step(x: float, alpha: float) -> float:
    if x <= 0.5:
        return x * (1.0 + (2.0 * x) ** alpha)
    return 2.0 * x - 1.0


@nb.njit(cache=True)
def orbit_samples(x0: float, alpha: float, n_steps: int, stride: int) -> np.ndarray:
    """x_k for k = stride, 2*stride, ... up to n_steps."""
    n_out = n_steps // stride
    out = np.empty(n_out, np.float64)
    x = x0
    j = 0
    for k in range(1, n_steps + 1):
        x = _step(x, alpha)
        if k % stride == 0:
            out[j] = x
            j += 1
    return out


@nb.njit(cache=True)
def _occupancy_one(
    x0: float,
    alpha: float,
    n_steps: int,
    burn_in: int,
    inv_grading: float,
    n_cells: int,
    counts: np.ndarray,
) -> None:
    x = x0
    for _ in range(burn_in):
        x = _step(x, alpha)
    for _ in range(n_steps):
        x = _step(x, alpha)
        # cell i is ((i/M)**g, ((i+1)/M)**g]
        i = int(math.ceil(x**inv_grading * n_cells)) - 1
        if i < 0:
            i = 0
        elif i >= n_cells:
            i = n_cells - 1
        counts[i] += 1


@nb.njit(cache=True, parallel=True)
def occupancy_counts(
    x0s: np.ndarray,
    alpha: float,
    n_steps: int,
    burn_in: int,
    inv_grading: float,
    n_cells: int,
) -> np.ndarray:
    """Per-orbit cell occupancy counts on the graded mesh; shape (orbits, n_cells)."""
    n_orbits = x0s.size
    out = np.zeros((n_orbits, n_cells), np.int64)
    for j in nb.prange(n_orbits):
        _occupancy_one(x0s[j], alpha, n_steps, burn_in, inv_grading, n_cells, out[j])
    return out


@nb.njit(cache=True)
def _hits_one(
    x0: float,
    alpha: float,
    burn_in: int,
    lo: np.ndarray,
    hi: np.ndarray,
    checkpoints: np.ndarray,
    counts_out: np.ndarray,
) -> int:
    x = x0
    for _ in range(burn_in):
        x = _step(x, alpha)
    hits = 0
    last_hit = 0
    ci = 0
    for k in range(lo.size):
        x = _step(x, alpha)
        if lo[k] < x <= hi[k]:
            hits += 1
            last_hit = k + 1
        if ci < checkpoints.size and checkpoints[ci] == k + 1:
            counts_out[ci] = hits
            ci += 1
    return last_hit


@nb.njit(cache=True, parallel=True)
def hit_counts(
    x0s: np.ndarray,
    alpha: float,
    burn_in: int,
    lo: np.ndarray,
    hi: np.ndarray,
    checkpoints: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Hit counts S_N at checkpoints and last-hit index, per orbit.

    Step k (1-based, counted after the burn-in) scores a hit when
    lo[k-1] < x_k <= hi[k-1].
    """
    n_orbits = x0s.size
    counts = np.zeros((n_orbits, checkpoints.size), np.int64)
    last = np.zeros(n_orbits, np.int64)
    for j in nb.prange(n_orbits):
        last[j] = _hits_one(x0s[j], alpha, burn_in, lo, hi, checkpoints, counts[j])
    return counts, last


@nb.njit(cache=True)
def pair_frequency(
    x0: float,
    alpha: float,
    burn_in: int,
    n_steps: int,
    a_lo: float,
    a_hi: float,
    b_lo: float,
    b_hi: float,
    lag: int,
) -> tuple[int, int]:
    """Counts of {x_k in A} and {x_k in A and x_{k+lag} in B} along one orbit."""
    x = x0
    for _ in range(burn_in):
        x = _step(x, alpha)
    in_a = np.zeros(lag, np.uint8)
    n_a = 0
    n_ab = 0
    for k in range(n_steps + lag):
        x = _step(x, alpha)
        slot = k % lag
        if k >= lag and in_a[slot] == 1:
            if b_lo < x <= b_hi:
                n_ab += 1
        hit_a = 1 if (a_lo < x <= a_hi and k < n_steps) else 0
        if hit_a and k < n_steps:
            n_a += 1
        in_a[slot] = hit_a
    return n_a, n_ab
