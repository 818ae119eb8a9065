"""Pointwise arithmetic for the intermittent interval map.

The map acts on (0, 1] and has a neutral fixed point at the origin:

    T(x) = x * (1 + (2*x)**alpha)   for x in (0, 1/2]
    T(x) = 2*x - 1                  for x in (1/2, 1]

with alpha in (0, 1).  The left branch owns x = 1/2, so T(1/2) = 1
exactly.  Writing 2**alpha * x**alpha as (2*x)**alpha keeps the branch
endpoints exact in floating point.

Besides the map itself this module builds the first-return structure of
Y = (1/2, 1]: the cut points y_k of the left-branch preimage chain, the
return-time intervals I_n, and the inverse branches psi_n of T**n on I_n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DomainError",
    "NumericError",
    "MapParams",
    "Interval",
    "FirstReturnStructure",
    "apply_map",
    "derivative",
    "left_inverse",
    "left_inverse_vec",
    "iterate_orbit",
    "first_return_time",
    "build_return_structure",
    "inverse_branch",
]


class DomainError(ValueError):
    """Input outside the admissible domain."""


class NumericError(RuntimeError):
    """A numerical routine failed to reach its tolerance."""


@dataclass(frozen=True)
class MapParams:
    """Map parameter alpha in (0, 1); beta = 1/alpha is derived."""

    alpha: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")

    @cached_property
    def beta(self) -> float:
        return 1.0 / self.alpha


@dataclass(frozen=True)
class Interval:
    """Half-open interval (lo, hi] inside (0, 1]."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise DomainError(f"invalid interval ({self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo < x <= self.hi


def _check_point(x: float) -> None:
    if not (0.0 < x <= 1.0):
        raise DomainError(f"point {x!r} outside (0, 1]")


def apply_map(x: float, p: MapParams) -> float:
    """One step of the map.  Left branch on (0, 1/2], right on (1/2, 1]."""
    _check_point(x)
    if x <= 0.5:
        return x * (1.0 + (2.0 * x) ** p.alpha)
    return 2.0 * x - 1.0


def derivative(x: float, p: MapParams) -> float:
    """T'(x); equals 1 + (1+alpha)(2x)**alpha on the left branch, 2 on the right."""
    _check_point(x)
    if x <= 0.5:
        return 1.0 + (1.0 + p.alpha) * (2.0 * x) ** p.alpha
    return 2.0


def left_inverse(y: float, p: MapParams) -> float:
    """Unique u in (0, 1/2] with u*(1 + (2u)**alpha) = y, to ~1e-15.

    The left branch is smooth, strictly increasing and convex, so a
    Newton iteration started from the right end of the bracket
    converges monotonically without any safeguarding.
    """
    if not (0.0 < y <= 1.0):
        raise DomainError(f"value {y!r} outside (0, 1]")
    return float(left_inverse_vec(np.asarray([y]), p.alpha)[0])


def left_inverse_vec(y: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized left-branch inverse (no domain checks)."""
    y = np.asarray(y, dtype=np.float64)
    u = np.minimum(y, 0.5)  # f(u0) >= 0 and f is convex: Newton is monotone
    for _ in range(80):
        t = (2.0 * u) ** alpha
        step = (u * (1.0 + t) - y) / (1.0 + (1.0 + alpha) * t)
        u = u - step
        if np.max(np.abs(step)) < 2e-16:
            break
    return u


def iterate_orbit(
    x0: float,
    n_steps: int,
    p: MapParams,
    visitor: Optional[Callable[[int, float], None]] = None,
) -> float:
    """Stream x_k = T**k(x0) for k = 1..n_steps to ``visitor``; return the final point.

    The orbit is never stored; this is the reference (pure Python)
    iterator.  Long-orbit statistics use the compiled kernels instead.
    """
    _check_point(x0)
    if n_steps < 0:
        raise DomainError("n_steps must be nonnegative")
    x = x0
    for k in range(1, n_steps + 1):
        x = apply_map(x, p)
        if visitor is not None:
            visitor(k, x)
    return x


def first_return_time(x: float, p: MapParams, cap: int = 10**9) -> Optional[int]:
    """Smallest n >= 1 with T**n(x) in Y = (1/2, 1], or None if n would exceed cap.

    A None return signals a point deep in the tail of the neutral
    branch (the excursion is longer than ``cap``).
    """
    if not (0.5 < x <= 1.0):
        raise DomainError(f"point {x!r} outside Y = (1/2, 1]")
    x = 2.0 * x - 1.0  # first step always uses the right branch
    n = 1
    while x <= 0.5:
        if n >= cap:
            return None
        x = x * (1.0 + (2.0 * x) ** p.alpha)
        n += 1
    return n


@dataclass(frozen=True)
class FirstReturnStructure:
    """Return-time partition of Y = (1/2, 1].

    cut_points holds y_0 = 1 > y_1 = 1/2 > y_2 > ... > y_{n_max}, the
    backward orbit of 1 under the left branch.  The set of points of Y
    returning in exactly n steps is I_n = ((1+y_n)/2, (1+y_{n-1})/2].
    """

    params: MapParams
    cut_points: np.ndarray
    n_max: int

    def __post_init__(self) -> None:
        if self.n_max < 2:
            raise DomainError("n_max must be >= 2")
        if len(self.cut_points) != self.n_max + 1:
            raise DomainError("cut_points must have length n_max + 1")
        if np.any(np.diff(self.cut_points) >= 0.0):
            raise NumericError("cut points are not strictly decreasing")

    def interval(self, n: int) -> Interval:
        """The return-time-n interval I_n."""
        self._check_n(n)
        y = self.cut_points
        return Interval(0.5 * (1.0 + y[n]), 0.5 * (1.0 + y[n - 1]))

    @cached_property
    def lengths(self) -> np.ndarray:
        """Leb(I_n) for n = 1..n_max (index 0 corresponds to n = 1)."""
        y = self.cut_points
        return 0.5 * (y[:-1] - y[1:])

    def return_time_of(self, x: float) -> Optional[int]:
        """Return time read off the partition: n such that x in I_n, or None past n_max."""
        if not (0.5 < x <= 1.0):
            raise DomainError(f"point {x!r} outside Y")
        # x in I_n iff y_n < 2x-1 <= y_{n-1}; cut_points is decreasing.
        w = 2.0 * x - 1.0
        if w <= self.cut_points[-1]:
            return None
        # smallest n with y_n < w (cut_points is descending)
        n = int(np.searchsorted(-self.cut_points, -w, side="right"))
        return n

    def _check_n(self, n: int) -> None:
        if not (1 <= n <= self.n_max):
            raise DomainError(f"n = {n} outside [1, {self.n_max}]")

    def tail_coefficient(self) -> float:
        """Fit c in Leb(I_n) ~ c / n**(beta+1) from the last computed decade."""
        beta = self.params.beta
        n = np.arange(1, self.n_max + 1, dtype=np.float64)
        sel = n >= self.n_max / 10
        return float(np.median((n[sel] ** (beta + 1.0)) * self.lengths[sel]))


def build_return_structure(p: MapParams, n_max: int = 4096) -> FirstReturnStructure:
    """Cut points by backward recursion y_{k+1} = left_inverse(y_k).

    Backward recursion is exact-to-roundoff near the neutral point,
    where forward iteration from tiny seeds would lose precision.
    """
    if n_max < 2:
        raise DomainError("n_max must be >= 2")
    ys = np.empty(n_max + 1, dtype=np.float64)
    ys[0] = 1.0
    ys[1] = 0.5
    for k in range(1, n_max):
        ys[k + 1] = left_inverse_vec(ys[k : k + 1], p.alpha)[0]
    return FirstReturnStructure(params=p, cut_points=ys, n_max=n_max)


def inverse_branch(n: int, w: float, frs: FirstReturnStructure) -> tuple[float, float]:
    """psi_n(w) in I_n together with psi_n'(w).

    The point is (1 + L**(n-1)(w)) / 2 where L is the left-branch
    inverse; the derivative is 1/(T**n)'(psi_n(w)) accumulated by the
    chain rule along the forward orbit, which avoids differentiating
    the root solve.
    """
    frs._check_n(n)
    if not (0.5 < w <= 1.0):
        raise DomainError(f"point {w!r} outside Y")
    p = frs.params
    u = w
    for _ in range(n - 1):
        u = left_inverse_vec(np.asarray([u]), p.alpha)[0]
    point = 0.5 * (1.0 + u)
    x = point
    prod = 1.0
    for _ in range(n):
        prod *= derivative(x, p)
        x = apply_map(x, p)
    return float(point), 1.0 / prod
