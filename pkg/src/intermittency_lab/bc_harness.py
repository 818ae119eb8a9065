"""Interval schedules, Monte Carlo hit statistics, and the pairwise criterion ratio.

A schedule is a sequence of target intervals A_n; an orbit "hits" at
time n when T**n(x) lands in A_n.  The harness measures hit counts
against their expected values under the invariant measure and
evaluates the pairwise-correlation criterion ratio whose limsup being
at most 1/2 implies the Borel-Cantelli conclusion.

Schedule kinds:
  anchored   fixed center p in (1/2, 1], lengths min(s_max, kappa/n)
  moving     center drifts cyclically over a band of (1/2, 1]
  nested     A_n = (p, p + s_n] with s_n decreasing, sum divergent
  kim_type   A_n = (0, n**(-1/(1-alpha))]: summable Lebesgue lengths
             but divergent invariant measure (exploratory family)
  pullback   A'_n = T^{-1}(A_{n+1}) ∩ (1/2, 1], exact halving of lengths
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .map_core import DomainError, Interval, MapParams
from .measure import InvariantDensity, starting_points
from .renewal_ops import CorrelationEngine, StepFunction, Y_HI, Y_LO

__all__ = [
    "IntervalSchedule",
    "make_schedule",
    "pullback",
    "HitReport",
    "CriterionReport",
    "run_experiment",
    "criterion_ratios",
]


class IntervalSchedule:
    """Sequence of target intervals with vectorized bound access."""

    kind: str = "base"

    def bounds(self, n: int) -> tuple[float, float]:
        lo, hi = self.bounds_many(np.asarray([n], dtype=np.int64))
        return float(lo[0]), float(hi[0])

    def interval(self, n: int) -> Interval:
        return Interval(*self.bounds(n))

    def leb(self, n: int) -> float:
        lo, hi = self.bounds(n)
        return hi - lo

    def bounds_many(self, ns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _check_inside(lo: np.ndarray, hi: np.ndarray, kind: str) -> None:
    if np.any(lo < 0.0) or np.any(hi > 1.0) or np.any(lo >= hi):
        raise DomainError(f"{kind} schedule leaves (0, 1]")


@dataclass
class AnchoredSchedule(IntervalSchedule):
    center: float = 0.8
    kappa: float = 0.5
    s_max: float = 0.2
    kind: str = field(default="anchored", init=False)

    def bounds_many(self, ns):
        s = np.minimum(self.s_max, self.kappa / ns)
        lo = self.center - 0.5 * s
        hi = self.center + 0.5 * s
        _check_inside(lo, hi, self.kind)
        return lo, hi

    def describe(self):
        return {"kind": self.kind, "center": self.center, "kappa": self.kappa,
                "s_max": self.s_max}


@dataclass
class MovingSchedule(IntervalSchedule):
    """Center drifts cyclically over (1/2 + margin, 1 - margin]."""

    drift: float = 0.01
    kappa: float = 0.5
    s_max: float = 0.1
    kind: str = field(default="moving", init=False)

    def bounds_many(self, ns):
        s = np.minimum(self.s_max, self.kappa / ns)
        band_lo = Y_LO + 0.5 * self.s_max
        band_w = (Y_HI - 0.5 * self.s_max) - band_lo
        center = band_lo + np.mod(self.drift * ns, band_w)
        lo = center - 0.5 * s
        hi = center + 0.5 * s
        _check_inside(lo, hi, self.kind)
        return lo, hi

    def describe(self):
        return {"kind": self.kind, "drift": self.drift, "kappa": self.kappa,
                "s_max": self.s_max}


@dataclass
class NestedSchedule(IntervalSchedule):
    anchor: float = 0.6
    kappa: float = 0.5
    s_max: float = 0.2
    kind: str = field(default="nested", init=False)

    def bounds_many(self, ns):
        s = np.minimum(self.s_max, self.kappa / ns)
        lo = np.full(len(ns), self.anchor)
        hi = self.anchor + s
        _check_inside(lo, hi, self.kind)
        return lo, hi

    def describe(self):
        return {"kind": self.kind, "anchor": self.anchor, "kappa": self.kappa,
                "s_max": self.s_max}


@dataclass
class KimTypeSchedule(IntervalSchedule):
    """A_n = (0, n**(-1/(1-alpha))]: sum of lengths finite, sum of measures infinite."""

    alpha: float = 0.5
    kind: str = field(default="kim_type", init=False)

    @property
    def exponent(self) -> float:
        return 1.0 / (1.0 - self.alpha)

    def bounds_many(self, ns):
        hi = ns.astype(np.float64) ** (-self.exponent)
        return np.zeros(len(ns)), hi

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclass
class PullbackSchedule(IntervalSchedule):
    """A'_n = T^{-1}(A_{n+1}) ∩ (1/2, 1] = ((1+lo_{n+1})/2, (1+hi_{n+1})/2].

    The right branch is affine with slope 2, so Leb(A'_n) =
    Leb(A_{n+1}) / 2 exactly and the result lies in Y.
    """

    source: IntervalSchedule
    kind: str = field(default="pullback", init=False)

    def bounds_many(self, ns):
        lo, hi = self.source.bounds_many(np.asarray(ns) + 1)
        return 0.5 * (1.0 + lo), 0.5 * (1.0 + hi)

    def describe(self):
        return {"kind": self.kind, "source": self.source.describe()}


_KINDS = {
    "anchored": AnchoredSchedule,
    "moving": MovingSchedule,
    "nested": NestedSchedule,
    "kim_type": KimTypeSchedule,
}


def make_schedule(kind: str, **params) -> IntervalSchedule:
    if kind not in _KINDS:
        raise DomainError(f"unknown schedule kind {kind!r}")
    try:
        schedule = _KINDS[kind](**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind} schedule: {exc}") from exc
    schedule.bounds_many(np.asarray([1, 2, 10], dtype=np.int64))  # fail fast
    return schedule


def pullback(schedule: IntervalSchedule) -> IntervalSchedule:
    return PullbackSchedule(source=schedule)


@dataclass
class HitReport:
    """Per-orbit hit counts at checkpoint horizons, with expected sums."""

    checkpoints: np.ndarray          # (C,)
    counts: np.ndarray               # (orbits, C) hit counts S_N
    expected: np.ndarray             # (C,) E_N = sum of mu(A_n)
    last_hit: np.ndarray             # (orbits,)
    seed: int

    @property
    def ratios(self) -> np.ndarray:
        """S_N / E_N per orbit per checkpoint."""
        return self.counts / self.expected[np.newaxis, :]

    def ratio_quantiles(self, qs=(0.1, 0.5, 0.9)) -> np.ndarray:
        return np.quantile(self.ratios, qs, axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["orbit_id", "checkpoint", "S_N", "E_N", "ratio", "last_hit"])
            for orbit in range(self.counts.shape[0]):
                for c, n in enumerate(self.checkpoints):
                    e = self.expected[c]
                    s = self.counts[orbit, c]
                    writer.writerow(
                        [
                            str(orbit),
                            str(int(n)),
                            str(int(s)),
                            format(e, ".17g"),
                            format(s / e if e > 0 else math.nan, ".17g"),
                            str(int(self.last_hit[orbit])),
                        ]
                    )


def run_experiment(
    schedule: IntervalSchedule,
    p: MapParams,
    density: InvariantDensity,
    n_orbits: int,
    horizon: int,
    seed: int,
    burn_in: int = 10**4,
    checkpoints: Optional[Sequence[int]] = None,
) -> HitReport:
    """Monte Carlo hit statistics for a schedule.

    Orbits start Lebesgue-uniform on Y; the burn-in is discarded and
    step indices are re-based to n = 1.  Expected sums use the Ulam
    measure.  Deterministic for a fixed seed, independent of thread
    count.
    """
    if n_orbits < 1 or horizon < 1:
        raise DomainError("n_orbits and horizon must be >= 1")
    if checkpoints is None:
        checkpoints = [c for c in (10**3, 10**4, 10**5, 10**6) if c <= horizon]
        if not checkpoints or checkpoints[-1] != horizon:
            checkpoints.append(horizon)
    cps = np.asarray(sorted(checkpoints), dtype=np.int64)
    if cps[0] < 1 or cps[-1] > horizon:
        raise DomainError("checkpoints must lie in [1, horizon]")

    ns = np.arange(1, horizon + 1, dtype=np.int64)
    lo, hi = schedule.bounds_many(ns)
    x0s = starting_points(n_orbits, seed)
    counts, last = kernels.hit_counts(x0s, p.alpha, burn_in, lo, hi, cps)

    mu_n = density.measure_many(lo, hi)
    expected = np.cumsum(mu_n)[cps - 1]
    return HitReport(
        checkpoints=cps, counts=counts, expected=expected, last_hit=last, seed=seed
    )


@dataclass
class CriterionReport:
    """Pairwise-correlation criterion ratio at one horizon."""

    horizon: int
    numerator: float
    denominator: float

    @property
    def ratio(self) -> float:
        return self.numerator / self.denominator


def criterion_csv(path, reports: Sequence[CriterionReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "numerator", "denominator", "ratio"])
        for r in reports:
            writer.writerow(
                [
                    str(r.horizon),
                    format(r.numerator, ".17g"),
                    format(r.denominator, ".17g"),
                    format(r.ratio, ".17g"),
                ]
            )


def criterion_ratios(
    schedule: IntervalSchedule,
    engine: CorrelationEngine,
    horizons: Sequence[int],
    band: int = 256,
) -> list[CriterionReport]:
    """Criterion ratios sum_{i<j} mu(B_i ∩ B_j) / (sum_j mu(B_j))**2 with B_n = T^{-n}A_n.

    Targets must lie inside Y (apply ``pullback`` first otherwise).
    Pair terms at lag j - i <= band use the operator correlation
    mu(A_i ∩ T^{-(j-i)} A_j); longer lags use the independent
    approximation scaled by c_band.
    """
    horizons = sorted(horizons)
    n_top = horizons[-1]
    if band < 1 or band >= n_top:
        raise DomainError("band must lie in [1, max horizon)")
    ns = np.arange(1, n_top + 1, dtype=np.int64)
    lo, hi = schedule.bounds_many(ns)
    if np.any(lo < Y_LO):
        raise DomainError("criterion targets must lie inside Y; pull the schedule back")
    mu = engine.density.measure_many(lo, hi)

    # pair table P[i, l] = mu(A_{i+1} ∩ T^{-(l+1)} A_{i+2+l}) for lag <= band,
    # filled by propagating blocks of sources through the transfer operator
    pair = np.zeros((n_top, band))
    bp = engine.y_breakpoints
    block = 256
    b = engine.mesh.boundaries
    m = engine.mesh.size
    # gather table: integral of v over (lo_j, hi_j] = sum_w v[idx[j, w]] * wt[j, w]
    i0 = np.searchsorted(b, lo, side="right") - 1
    i1 = np.searchsorted(b, hi, side="left") - 1
    width_max = int((i1 - i0).max()) + 1
    idx = np.minimum(i0[:, None] + np.arange(width_max)[None, :], m - 1)
    wt = np.maximum(
        np.minimum(hi[:, None], b[idx + 1]) - np.maximum(lo[:, None], b[idx]), 0.0
    )
    wt[idx > i1[:, None]] = 0.0
    for start in range(0, n_top - 1, block):
        stop = min(start + block, n_top - 1)
        cols = []
        for i in range(start, stop):
            ind = StepFunction.indicator(Interval(lo[i], hi[i]), bp)
            f = StepFunction(bp, ind.values * engine.h_y.values)
            cols.append(engine.embed(f))
        v = np.stack(cols, axis=1)
        i_arr = np.arange(start, stop)
        col_arr = np.arange(stop - start)
        for lag in range(1, band + 1):
            v = engine.transport @ v
            j_arr = i_arr + lag
            valid = j_arr < n_top
            if not np.any(valid):
                break
            jv = j_arr[valid]
            picked = v[idx[jv], col_arr[valid][:, None]]
            pair[i_arr[valid], lag - 1] = (picked * wt[jv]).sum(axis=1)

    c_band = engine.estimate_cn(band)[-1]

    reports = []
    for h in horizons:
        mu_h = mu[:h]
        total = float(mu_h.sum())
        near = 0.0
        for lag in range(1, band + 1):
            if h - lag > 0:
                near += float(pair[: h - lag, lag - 1].sum())
        all_cross = 0.5 * (total**2 - float((mu_h**2).sum()))
        near_indep = sum(
            float((mu_h[: h - lag] * mu_h[lag:h]).sum()) for lag in range(1, band + 1)
        )
        far = c_band * (all_cross - near_indep)
        reports.append(
            CriterionReport(horizon=h, numerator=near + far, denominator=total**2)
        )
    return reports
