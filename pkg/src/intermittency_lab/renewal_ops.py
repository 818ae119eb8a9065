"""First-return operators on BV step functions over Y = (1/2, 1].

R_n acts on a function supported in Y by pulling it back through the
inverse branch psi_n of T**n on I_n and weighting by psi_n'; summing
over n gives R(1), whose leading eigenfunction is the invariant
density restricted to Y.  The all-returns operators T_n are realized
by powers of the full-interval Ulam matrix, and the renewal identity
(T_n as a sum over first-return words) is verified by exact interval
bookkeeping.

The Y mesh is uniform: Y is bounded away from the neutral point and
the density is Lipschitz there, so no grading is needed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .map_core import (
    DomainError,
    FirstReturnStructure,
    Interval,
    MapParams,
    NumericError,
    left_inverse_vec,
)
from .measure import GradedMesh, InvariantDensity, partition_overlap

__all__ = [
    "StepFunction",
    "uniform_y_mesh",
    "var_norm",
    "projector_P",
    "ReturnOperators",
    "CorrelationEngine",
    "RenewalDiagnostics",
    "kac_check",
    "renewal_identity_check",
    "compositions",
]

Y_LO = 0.5
Y_HI = 1.0


def uniform_y_mesh(size: int) -> np.ndarray:
    """Breakpoints of a uniform partition of Y = (1/2, 1]."""
    return 0.5 + 0.5 * np.arange(size + 1, dtype=np.float64) / size


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function on a partition of Y, zero outside Y.

    Piece i is (breakpoints[i], breakpoints[i+1]].
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != len(self.breakpoints) - 1:
            raise DomainError("values/breakpoints length mismatch")

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.breakpoints[:-1] + self.breakpoints[1:])

    def integral(self) -> float:
        return float(self.values @ self.widths)

    def sample(self, x: np.ndarray) -> np.ndarray:
        """Values at points of Y (0 outside the partition's span)."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, x, side="left") - 1
        inside = (idx >= 0) & (idx < len(self.values)) & (x > self.breakpoints[0])
        out = np.zeros_like(x)
        out[inside] = self.values[idx[inside]]
        return out

    def restrict_integral(self, lo: float, hi: float) -> float:
        """Integral of the function over (lo, hi]."""
        cum = np.concatenate(([0.0], np.cumsum(self.values * self.widths)))
        lo_v, hi_v = np.interp([lo, hi], self.breakpoints, cum)
        return float(hi_v - lo_v)

    @classmethod
    def constant(cls, value: float, breakpoints: np.ndarray) -> "StepFunction":
        return cls(breakpoints, np.full(len(breakpoints) - 1, float(value)))

    @classmethod
    def indicator(cls, interval: Interval, breakpoints: np.ndarray) -> "StepFunction":
        """Indicator of an interval, with fractional values on straddled pieces."""
        widths = np.diff(breakpoints)
        lo_clip = np.clip(interval.lo, breakpoints[:-1], breakpoints[1:])
        hi_clip = np.clip(interval.hi, breakpoints[:-1], breakpoints[1:])
        return cls(breakpoints, np.maximum(hi_clip - lo_clip, 0.0) / widths)


def var_norm(f: StepFunction) -> float:
    """Total variation over the real line of f extended by zero.

    For a step function the sup over partitions is attained at the
    breakpoints: |first| + sum of |jumps| + |last|.
    """
    v = f.values
    if len(v) == 0:
        return 0.0
    return float(abs(v[0]) + np.abs(np.diff(v)).sum() + abs(v[-1]))


def projector_P(f: StepFunction, h_y: StepFunction, mu_y: float) -> StepFunction:
    """Rank-one spectral projector: (∫_Y f dLeb / mu(Y)) * h_Y."""
    return StepFunction(h_y.breakpoints, (f.integral() / mu_y) * h_y.values)


class ReturnOperators:
    """Discretized first-return operators R_n and their sum R(1).

    Assembly walks the left-branch inverse chain once over the Y-mesh
    breakpoints: level n holds the image partition psi_n(breakpoints)
    of I_n, and R_n is the exact Galerkin (cell-averaging) matrix
    G[i, j] = Leb(psi_n(piece_i) ∩ piece_j) / Leb(piece_i), so that
    ∫ R_n f over any union of pieces equals the integral of f over its
    psi_n image.  After summation the columns are rescaled to fold the
    n > n_max tail in proportionally, which makes R(1) exactly
    integral preserving.
    """

    def __init__(self, frs: FirstReturnStructure, mesh_size: int = 4096):
        self.frs = frs
        self.breakpoints = uniform_y_mesh(mesh_size)
        self.mesh_size = mesh_size
        self._assemble()

    def _assemble(self) -> None:
        frs = self.frs
        alpha = frs.params.alpha
        bp = self.breakpoints
        mids = 0.5 * (bp[:-1] + bp[1:])
        widths = np.diff(bp)
        m = self.mesh_size

        mass = np.zeros((m, m))  # row i: mass arriving in Y-piece from piece i's image
        norms = np.empty(frs.n_max)

        u = bp.copy()
        for n in range(1, frs.n_max + 1):
            if n > 1:
                u = left_inverse_vec(u, alpha)
            pts = 0.5 * (1.0 + u)  # psi_n at the breakpoints, partitioning I_n
            overlap = partition_overlap(pts, bp).tocoo()
            mass[overlap.row, overlap.col] += overlap.data
            # sup bound: largest average of psi_n' over one piece
            norms[n - 1] = float(np.max(np.diff(pts) / widths))

        r1 = mass / widths[:, np.newaxis]
        # fold the analytic tail (n > n_max) into the assembled columns
        col_integral = widths @ r1
        tiny = col_integral <= 0.0
        col_integral[tiny] = 1.0
        r1 *= (widths / col_integral)[np.newaxis, :]

        self.r1 = r1
        self.norms = norms
        self._widths = widths
        self._mids = mids

    def operator_norm(self, n: int) -> float:
        """Sup-norm bound for R_n (max row sum of its one-entry rows)."""
        self.frs._check_n(n)
        return float(self.norms[n - 1])

    def apply_Rn(self, n: int, f: StepFunction) -> StepFunction:
        """R_n f by exact cell averaging over the psi_n image partition.

        Piece i of the result carries the mean of f over psi_n(piece_i),
        so ∫ R_n f dLeb = ∫_{I_n} f dLeb exactly for f on the same mesh.
        """
        self.frs._check_n(n)
        alpha = self.frs.params.alpha
        u = self.breakpoints.copy()
        for _ in range(2, n + 1):
            u = left_inverse_vec(u, alpha)
        pts = 0.5 * (1.0 + u)
        overlap = partition_overlap(pts, self.breakpoints)
        vals = (overlap @ f.values) / self._widths
        return StepFunction(self.breakpoints, vals)

    def apply_R1(self, f: StepFunction) -> StepFunction:
        return StepFunction(self.breakpoints, self.r1 @ f.values)

    @cached_property
    def leading(self) -> tuple[float, StepFunction]:
        """Leading eigenvalue and positive eigenfunction of R(1) (power iteration)."""
        v = np.ones(self.mesh_size)
        lam = 1.0
        for _ in range(20000):
            w = self.r1 @ v
            norm = float(w @ self._widths)
            if norm <= 0.0:
                raise NumericError("power iteration on R(1) lost positivity")
            w /= norm
            lam = float((w @ (self.r1 @ w)) / (w @ w))
            delta = float(np.abs(w - v).sum()) / self.mesh_size
            v = w
            if delta < 1e-14:
                break
        else:
            raise NumericError("power iteration on R(1) did not converge")
        return lam, StepFunction(self.breakpoints, v)


@dataclass
class RenewalDiagnostics:
    """Kac partial sums, gamma estimate, and correlation-sequence fit."""

    gamma_hat: float
    mu_y: float
    kac_partial_sums: np.ndarray
    kac_ns: np.ndarray
    c_n_estimates: Optional[np.ndarray] = None
    c_ns: Optional[np.ndarray] = None
    decay_exponent: Optional[float] = None
    decay_exponent_halfwidth: Optional[float] = None
    fit_window: Optional[tuple[int, int]] = None

    def to_json(self, path) -> None:
        payload = {
            "gamma_hat": self.gamma_hat,
            "mu_Y": self.mu_y,
            "kac_total": float(self.kac_partial_sums[-1]),
            "decay_exponent": self.decay_exponent,
            "decay_exponent_halfwidth": self.decay_exponent_halfwidth,
            "fit_window": list(self.fit_window) if self.fit_window else None,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def kac_check(
    frs: FirstReturnStructure, density: InvariantDensity, n_terms: int
) -> RenewalDiagnostics:
    """Partial sums of sum_n n * mu(I_n), which converge to 1 (Kac).

    Also reports gamma_hat = 1 / mu(Y).
    """
    if n_terms > frs.n_max:
        raise DomainError("n_terms exceeds the structure's n_max")
    y = frs.cut_points
    los = 0.5 * (1.0 + y[1 : n_terms + 1])
    his = 0.5 * (1.0 + y[:n_terms])
    mu_in = density.measure_many(los, his)
    ns = np.arange(1, n_terms + 1, dtype=np.float64)
    partial = np.cumsum(ns * mu_in)
    mu_y = density.measure(Y_LO, Y_HI)
    return RenewalDiagnostics(
        gamma_hat=1.0 / mu_y,
        mu_y=mu_y,
        kac_partial_sums=partial,
        kac_ns=ns.astype(np.int64),
    )


class CorrelationEngine:
    """All-returns operators T_n and correlation statistics via Ulam powers.

    T_n f is computed as: embed 1_Y f into the full graded mesh, apply
    the discretized transfer operator n times, restrict back to Y.
    """

    def __init__(
        self,
        params: MapParams,
        mesh: GradedMesh,
        ulam: sp.csr_matrix,
        density: InvariantDensity,
        y_mesh_size: int = 4096,
    ):
        self.params = params
        self.mesh = mesh
        self.density = density
        self.y_breakpoints = uniform_y_mesh(y_mesh_size)
        w = mesh.widths
        # density-value transport: v -> D^{-1} U^T D v
        self.transport = (sp.diags(1.0 / w) @ ulam.T @ sp.diags(w)).tocsr()
        overlap = partition_overlap(mesh.boundaries, self.y_breakpoints)
        self._embed = (sp.diags(1.0 / w) @ overlap).tocsr()  # Y values -> full values
        y_w = np.diff(self.y_breakpoints)
        self._restrict = (sp.diags(1.0 / y_w) @ overlap.T).tocsr()
        self.mu_y = density.measure(Y_LO, Y_HI)
        self.h_y = StepFunction(
            self.y_breakpoints, self._restrict @ density.weights
        )

    def embed(self, f: StepFunction) -> np.ndarray:
        return self._embed @ f.values

    def restrict(self, values: np.ndarray) -> StepFunction:
        return StepFunction(self.y_breakpoints, self._restrict @ values)

    def _integral_over(self, values: np.ndarray, lo: float, hi: float) -> float:
        cum = np.concatenate(([0.0], np.cumsum(values * self.mesh.widths)))
        lo_v, hi_v = np.interp([lo, hi], self.mesh.boundaries, cum)
        return float(hi_v - lo_v)

    def apply_Tn(self, n: int, f: StepFunction) -> StepFunction:
        if n < 1:
            raise DomainError("n must be >= 1")
        v = self.embed(f)
        for _ in range(n):
            v = self.transport @ v
        return self.restrict(v)

    def correlation(self, a: Interval, b: Interval, n: int) -> float:
        """mu(A ∩ T^{-n} B) for intervals A, B inside Y."""
        return self.correlation_profile(a, b, n)[-1]

    def correlation_profile(self, a: Interval, b: Interval, n_max: int) -> np.ndarray:
        """mu(A ∩ T^{-n} B) for n = 1..n_max along one propagation sweep."""
        if not (Y_LO <= a.lo and b.lo >= Y_LO):
            raise DomainError("A and B must lie inside Y")
        ind = StepFunction.indicator(a, self.y_breakpoints)
        f = StepFunction(self.y_breakpoints, ind.values * self.h_y.values)
        v = self.embed(f)
        out = np.empty(n_max)
        for k in range(n_max):
            v = self.transport @ v
            out[k] = self._integral_over(v, b.lo, b.hi)
        return out

    def estimate_cn(self, n_max: int = 512) -> np.ndarray:
        """c_n_hat = mu(Y ∩ T^{-n} Y) / mu(Y)**2 for n = 1..n_max."""
        y = Interval(Y_LO, Y_HI)
        prof = self.correlation_profile(y, y, n_max)
        return prof / self.mu_y**2

    def fit_decay_exponent(
        self, c_hat: np.ndarray, window: tuple[int, int] = (16, 512)
    ) -> tuple[Optional[float], Optional[float], np.ndarray]:
        """Least-squares slope of log|c_n - 1| vs log n on a geometric subsample.

        Returns (slope, half-width, sample ns); the slope should sit
        near -(beta - 1).  The fit is omitted (None) when |c_n - 1|
        sits at the numeric floor.
        """
        lo, hi = window
        hi = min(hi, len(c_hat))
        ns = np.unique(
            np.round(lo * (hi / lo) ** np.linspace(0.0, 1.0, 24)).astype(int)
        )
        ns = ns[(ns >= lo) & (ns <= hi)]
        resid = np.abs(c_hat[ns - 1] - 1.0)
        if np.any(resid < 1e-13):
            return None, None, ns
        x = np.log(ns.astype(np.float64))
        y = np.log(resid)
        coef, cov = np.polyfit(x, y, 1, cov=True)
        slope = float(coef[0])
        half = float(2.0 * math.sqrt(max(cov[0, 0], 0.0)))
        return slope, half, ns

    def residual_bound_stats(
        self,
        pairs: Sequence[tuple[Interval, Interval]],
        ns: np.ndarray,
        c_hat: np.ndarray,
    ) -> np.ndarray:
        """|mu(A ∩ T^{-n}B) - c_n mu(A) mu(B)| * n**beta / mu(B), per pair per n.

        Shape (len(pairs), len(ns)); boundedness of these statistics is
        the quantitative correlation check.
        """
        beta = self.params.beta
        n_hi = int(np.max(ns))
        out = np.empty((len(pairs), len(ns)))
        for i, (a, b) in enumerate(pairs):
            prof = self.correlation_profile(a, b, n_hi)
            mu_a = self.density.measure(a.lo, a.hi)
            mu_b = self.density.measure(b.lo, b.hi)
            resid = np.abs(prof[ns - 1] - c_hat[ns - 1] * mu_a * mu_b)
            out[i] = resid * ns.astype(np.float64) ** beta / mu_b
        return out


def compositions(n: int):
    """All tuples of positive integers summing to n (2**(n-1) of them)."""
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for rest in compositions(n - first):
            yield (first,) + rest


def _psi_endpoint(n: int, w: float, alpha: float) -> float:
    u = w
    for _ in range(n - 1):
        u = float(left_inverse_vec(np.asarray([u]), alpha)[0])
    return 0.5 * (1.0 + u)


def renewal_identity_check(n: int, frs: FirstReturnStructure) -> float:
    """Measure-level renewal check: partition {x in Y : T^n x in Y} by first-return word.

    Returns |Leb({x in Y : T^n x in Y}) - sum over words of Leb(word cell)|,
    an exact set identity up to root tolerance.  Words are compositions
    (k_1, ..., k_l) of n and the word cell is psi_{k_1}(...psi_{k_l}(Y)).
    """
    if not (1 <= n <= 12):
        raise DomainError("renewal check supports n in [1, 12]")
    alpha = frs.params.alpha

    # direct side: backward propagation of Y through both branch inverses
    segs = [(0.5, 1.0)]
    for _ in range(n):
        nxt = []
        for lo, hi in segs:
            nxt.append(
                (
                    float(left_inverse_vec(np.asarray([lo]), alpha)[0]),
                    float(left_inverse_vec(np.asarray([hi]), alpha)[0]),
                )
            )
            nxt.append((0.5 * (1.0 + lo), 0.5 * (1.0 + hi)))
        segs = nxt
    direct = sum(max(0.0, min(hi, 1.0) - max(lo, 0.5)) for lo, hi in segs)

    total = 0.0
    for word in compositions(n):
        lo, hi = 0.5, 1.0
        for k in reversed(word):
            lo = _psi_endpoint(k, lo, alpha)
            hi = _psi_endpoint(k, hi, alpha)
        total += hi - lo
    return abs(direct - total)


def diagnostics_csv(
    path,
    frs: FirstReturnStructure,
    density: InvariantDensity,
    diag: RenewalDiagnostics,
    residual_stats: Optional[np.ndarray] = None,
    residual_ns: Optional[np.ndarray] = None,
) -> None:
    """Per-n diagnostics table: (n, leb_In, mu_In, kac_partial, c_n_hat, residual_bound_stat)."""
    n_rows = len(diag.kac_ns)
    y = frs.cut_points
    c_map = {}
    if diag.c_n_estimates is not None and diag.c_ns is not None:
        c_map = dict(zip(diag.c_ns.tolist(), diag.c_n_estimates.tolist()))
    r_map = {}
    if residual_stats is not None and residual_ns is not None:
        worst = residual_stats.max(axis=0)
        r_map = dict(zip(residual_ns.tolist(), worst.tolist()))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n", "leb_In", "mu_In", "kac_partial", "c_n_hat", "residual_bound_stat"]
        )
        for i in range(n_rows):
            n = int(diag.kac_ns[i])
            lo, hi = 0.5 * (1.0 + y[n]), 0.5 * (1.0 + y[n - 1])
            row = [
                str(n),
                format(hi - lo, ".17g"),
                format(density.measure(lo, hi), ".17g"),
                format(diag.kac_partial_sums[i], ".17g"),
                format(c_map[n], ".17g") if n in c_map else "",
                format(r_map[n], ".17g") if n in r_map else "",
            ]
            writer.writerow(row)
