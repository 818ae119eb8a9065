"""Invariant density via Ulam discretization on a graded mesh.

The invariant density blows up like x**(-alpha) at the origin, so the
mesh boundaries are x_i = (i/M)**g with g = 1/(1-alpha) by default,
which roughly equidistributes cell masses.  The Ulam matrix is exact
up to root tolerance because both branch inverses are available in
closed form or by monotone root solves.

A Birkhoff (orbit-histogram) estimator provides an independent
cross-check of the Ulam density; reported statistics always use the
Ulam estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels
from .map_core import DomainError, Interval, MapParams, NumericError, left_inverse_vec

__all__ = [
    "GradedMesh",
    "InvariantDensity",
    "default_grading",
    "partition_overlap",
    "build_ulam",
    "stationary_density",
    "measure_of_interval",
    "birkhoff_histogram",
    "starting_points",
]


def default_grading(alpha: float) -> float:
    """Mesh exponent 1/(1-alpha), capped so the first cell stays numerically live.

    1/(1-alpha) equidistributes cell masses under the invariant density,
    but above exponent 4 the first cell of a 2**14 mesh becomes so small
    that its escape probability under the map rounds to zero, which turns
    it into a spurious absorbing state of the discretized transfer matrix.
    """
    return min(1.0 / (1.0 - alpha), 4.0)


@dataclass(frozen=True)
class GradedMesh:
    """Partition of (0, 1] into half-open cells (b[i], b[i+1]]."""

    boundaries: np.ndarray
    grading: float

    @classmethod
    def build(cls, size: int, grading: float) -> "GradedMesh":
        if size < 2 or grading < 1.0:
            raise DomainError("mesh needs size >= 2 and grading >= 1")
        b = (np.arange(size + 1, dtype=np.float64) / size) ** grading
        b[0] = 0.0
        b[-1] = 1.0
        return cls(boundaries=b, grading=float(grading))

    @property
    def size(self) -> int:
        return len(self.boundaries) - 1

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.boundaries[:-1] + self.boundaries[1:])


def partition_overlap(bounds_rows: np.ndarray, bounds_cols: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix O with O[i, j] = Leb(row cell i  ∩  column cell j).

    Both arguments are increasing boundary arrays of interval
    partitions.  Computed by slicing on the merged boundary set, so
    overlaps are exact up to rounding.
    """
    lo = max(bounds_rows[0], bounds_cols[0])
    hi = min(bounds_rows[-1], bounds_cols[-1])
    pts = np.union1d(bounds_rows, bounds_cols)
    pts = pts[(pts >= lo) & (pts <= hi)]
    if len(pts) < 2:
        return sp.csr_matrix((len(bounds_rows) - 1, len(bounds_cols) - 1))
    seg_len = np.diff(pts)
    seg_mid = 0.5 * (pts[:-1] + pts[1:])
    # Clip handles midpoints that round exactly onto a duplicated
    # boundary (the partitions may contain cells of width below one
    # ulp); any misassigned segment has length on that same scale.
    ri = np.clip(np.searchsorted(bounds_rows, seg_mid) - 1, 0, len(bounds_rows) - 2)
    ci = np.clip(np.searchsorted(bounds_cols, seg_mid) - 1, 0, len(bounds_cols) - 2)
    keep = seg_len > 0.0
    mat = sp.coo_matrix(
        (seg_len[keep], (ri[keep], ci[keep])),
        shape=(len(bounds_rows) - 1, len(bounds_cols) - 1),
    )
    return mat.tocsr()


def build_ulam(p: MapParams, mesh: GradedMesh) -> sp.csr_matrix:
    """Row-stochastic Ulam matrix: U[i, j] = Leb(cell_i ∩ T^{-1} cell_j) / Leb(cell_i).

    The preimage of each cell is the union of one left-branch interval
    (via the monotone root solve) and one right-branch interval (affine,
    slope 2), so every entry is exact up to root tolerance.
    """
    b = mesh.boundaries
    left_pre = np.empty_like(b)
    left_pre[0] = 0.0
    left_pre[1:] = left_inverse_vec(b[1:], p.alpha)
    right_pre = 0.5 * (1.0 + b)
    overlap = partition_overlap(b, left_pre) + partition_overlap(b, right_pre)
    inv_w = sp.diags(1.0 / mesh.widths)
    return (inv_w @ overlap).tocsr()


@dataclass(frozen=True)
class InvariantDensity:
    """Piecewise-constant density on a mesh; weights are cell averages."""

    mesh: GradedMesh
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.weights @ self.mesh.widths)

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Cumulative measure at mesh boundaries (piecewise linear in between)."""
        out = np.empty(len(self.mesh.boundaries))
        out[0] = 0.0
        np.cumsum(self.weights * self.mesh.widths, out=out[1:])
        return out

    def measure(self, lo: float, hi: float) -> float:
        """Measure of (lo, hi]; exact for the piecewise-constant representation."""
        b = self.mesh.boundaries
        lo_v, hi_v = np.interp([lo, hi], b, self.cumulative)
        return float(hi_v - lo_v)

    def measure_many(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        b = self.mesh.boundaries
        return np.interp(hi, b, self.cumulative) - np.interp(lo, b, self.cumulative)

    def to_csv(self, path) -> None:
        b = self.mesh.boundaries
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cell_lo", "cell_hi", "weight"])
            for i, w in enumerate(self.weights):
                writer.writerow(
                    [format(b[i], ".17g"), format(b[i + 1], ".17g"), format(w, ".17g")]
                )


def stationary_density(
    ulam: sp.csr_matrix,
    mesh: GradedMesh,
    tol: float = 1e-12,
) -> InvariantDensity:
    """Fixed density of the Ulam matrix by a direct sparse linear solve.

    The row-stochastic matrix has leading eigenvalue exactly 1; the
    stationary cell masses solve (U^T - I) m = 0 with total mass 1, so
    one row of the singular system is replaced by the normalization
    constraint.  (Power iteration is impractical here: the spectral gap
    shrinks with the mesh because the map mixes only polynomially.)
    ``tol`` bounds the accepted L1 residual of the stationary equation.
    """
    n = ulam.shape[0]
    a = (ulam.T - sp.identity(n, format="csr")).tolil()
    a[0, :] = 1.0
    rhs = np.zeros(n)
    rhs[0] = 1.0
    m = sp.linalg.spsolve(a.tocsc(), rhs)
    m /= m.sum()
    residual = float(np.abs(ulam.T @ m - m).sum())
    if not np.isfinite(residual) or residual > tol:
        raise NumericError(
            f"stationary solve residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )
    return InvariantDensity(mesh=mesh, weights=m / mesh.widths)


def measure_of_interval(interval: Interval, density: InvariantDensity) -> float:
    return density.measure(interval.lo, interval.hi)


def starting_points(n_orbits: int, seed: int) -> np.ndarray:
    """Lebesgue-uniform starts on Y = (1/2, 1], one counter-based substream per orbit.

    Philox is counter-based, so orbit j's start depends only on
    (seed, j); results are identical for any parallel split.
    """
    out = np.empty(n_orbits, dtype=np.float64)
    for j in range(n_orbits):
        u = np.random.Generator(np.random.Philox(key=seed, counter=j)).random()
        out[j] = 0.5 + 0.5 * u
    return out


def birkhoff_histogram(
    p: MapParams,
    mesh: GradedMesh,
    n_orbits: int,
    n_steps: int,
    burn_in: int,
    seed: int,
) -> InvariantDensity:
    """Cell-occupation frequencies of Monte Carlo orbits, as a density.

    Independent estimator of the invariant measure used to
    cross-validate the Ulam density; deterministic given the seed.
    """
    if n_orbits < 1 or n_steps < 1:
        raise DomainError("n_orbits and n_steps must be >= 1")
    x0s = starting_points(n_orbits, seed)
    counts = kernels.occupancy_counts(
        x0s, p.alpha, n_steps, burn_in, 1.0 / mesh.grading, mesh.size
    )
    total = counts.sum(axis=0).astype(np.float64)  # fixed orbit order
    freq = total / total.sum()
    return InvariantDensity(mesh=mesh, weights=freq / mesh.widths)
