"""Rectangular state-space partitions, discrete control grids, and cell measures.

The state-space box is tiled by axis-aligned cells of uniform size. Cells are
indexed flat with the first axis varying fastest, so on a 2-D grid the cell
order runs along x within each row of y. Cell membership follows the half-open
convention [a, b) per axis, with the top face of the box folded into the last
cell so that every point of the closed box belongs to exactly one cell.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


def _as_float_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Partition:
    """Uniform rectangular partition of a compact box.

    Attributes
    ----------
    lower, upper : per-axis bounds of the box.
    resolution : per-axis cell counts.
    """

    lower: np.ndarray
    upper: np.ndarray
    resolution: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.resolution)

    @property
    def n_x(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def widths(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.resolution, dtype=np.float64)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def strides(self) -> np.ndarray:
        res = np.asarray(self.resolution, dtype=np.int64)
        return np.concatenate(([1], np.cumprod(res[:-1])))

    def multi_index(self, cell: int) -> tuple[int, ...]:
        if not 0 <= cell < self.n_x:
            raise ValueError(f"cell index {cell} out of range [0, {self.n_x})")
        out = []
        rem = cell
        for r in self.resolution:
            out.append(rem % r)
            rem //= r
        return tuple(out)

    def flat_index(self, multi) -> int:
        multi = tuple(int(m) for m in multi)
        if len(multi) != self.dim:
            raise ValueError("multi-index dimension mismatch")
        for m, r in zip(multi, self.resolution):
            if not 0 <= m < r:
                raise ValueError(f"multi-index {multi} out of range")
        return int(np.dot(multi, self.strides))

    def cell_bounds(self, cell: int) -> tuple[np.ndarray, np.ndarray]:
        mi = np.asarray(self.multi_index(cell), dtype=np.float64)
        lo = self.lower + mi * self.widths
        return lo, lo + self.widths

    def cell_center(self, cell: int) -> np.ndarray:
        lo, hi = self.cell_bounds(cell)
        return 0.5 * (lo + hi)

    def centers(self) -> np.ndarray:
        """Centers of all cells, shape (n_x, dim), in flat-index order."""
        axes = [
            self.lower[d] + (np.arange(self.resolution[d]) + 0.5) * self.widths[d]
            for d in range(self.dim)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel(order="F") for g in grids], axis=1)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.lower.tobytes())
        h.update(self.upper.tobytes())
        h.update(np.asarray(self.resolution, dtype=np.int64).tobytes())
        return h.hexdigest()


def build_partition(lower, upper, resolution) -> Partition:
    """Partition the box [lower, upper] into a uniform grid of cells.

    Parameters
    ----------
    lower, upper : per-axis bounds, lower < upper componentwise.
    resolution : per-axis cell counts, each >= 1.
    """
    lo = _as_float_vector(lower, "lower")
    hi = _as_float_vector(upper, "upper")
    res = tuple(int(r) for r in np.atleast_1d(resolution))
    if len(lo) != len(hi) or len(lo) != len(res):
        raise ValueError(
            f"dimension mismatch: lower {len(lo)}, upper {len(hi)}, resolution {len(res)}"
        )
    if any(r < 1 for r in res):
        raise ValueError(f"resolution must be >= 1 per axis, got {res}")
    if not np.all(lo < hi):
        raise ValueError("lower bounds must be strictly below upper bounds")
    return Partition(lower=_frozen(lo), upper=_frozen(hi), resolution=res)


def locate(partition: Partition, x) -> int:
    """Cell index of a point in the closed box.

    Cells are half-open per axis; points on the top face of the box are
    assigned to the last cell along that axis.
    """
    pt = np.asarray(x, dtype=np.float64)
    if pt.shape != (partition.dim,):
        raise ValueError(f"point has shape {pt.shape}, expected ({partition.dim},)")
    return int(locate_batch(partition, pt[None, :])[0])


def locate_batch(partition: Partition, points) -> np.ndarray:
    """Vectorized cell lookup, shape (m, dim) -> (m,) int64."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != partition.dim:
        raise ValueError(f"points must have shape (m, {partition.dim})")
    below = pts < partition.lower
    above = pts > partition.upper
    if below.any() or above.any():
        bad = np.nonzero((below | above).any(axis=1))[0][0]
        raise ValueError(f"point {pts[bad]} lies outside the box")
    rel = (pts - partition.lower) / partition.widths
    idx = np.floor(rel).astype(np.int64)
    np.clip(idx, 0, np.asarray(partition.resolution, dtype=np.int64) - 1, out=idx)
    return idx @ partition.strides


def quadrature_points(partition: Partition, cell: int, q: int) -> np.ndarray:
    """Centers of the q^d regular subgrid of a cell, shape (q^d, dim).

    Deterministic: depends only on (partition, cell, q). Points are strictly
    interior to the cell. Ordering matches the flat cell convention (first
    axis fastest).
    """
    if q < 1:
        raise ValueError(f"quadrature order must be >= 1, got {q}")
    lo, _ = partition.cell_bounds(cell)
    h = partition.widths
    axes = [lo[d] + (2 * np.arange(q) + 1) * (h[d] / (2 * q)) for d in range(partition.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel(order="F") for g in grids], axis=1)


def all_quadrature_points(partition: Partition, q: int) -> np.ndarray:
    """Quadrature points of every cell, stacked in cell order: (n_x * q^d, dim)."""
    return np.concatenate(
        [quadrature_points(partition, i, q) for i in range(partition.n_x)], axis=0
    )


@dataclass(frozen=True)
class ControlGrid:
    """Finite set of admissible control vectors inside a control box."""

    points: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def n_u(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.points.tobytes())
        return h.hexdigest()


def discretize_controls(lower, upper, counts) -> ControlGrid:
    """Regular grid over the control box.

    Each axis contributes `count` values: both endpoints are included when
    count >= 2; a single count places the midpoint. Point order has the first
    control axis varying fastest.
    """
    lo = _as_float_vector(lower, "lower")
    hi = _as_float_vector(upper, "upper")
    cts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(lo) != len(hi) or len(lo) != len(cts):
        raise ValueError("dimension mismatch between bounds and counts")
    if any(c < 1 for c in cts):
        raise ValueError(f"counts must be >= 1 per axis, got {cts}")
    if not np.all(lo <= hi):
        raise ValueError("control bounds are inverted")
    axes = []
    for d, c in enumerate(cts):
        if c == 1:
            axes.append(np.array([0.5 * (lo[d] + hi[d])]))
        else:
            axes.append(np.linspace(lo[d], hi[d], c))
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel(order="F") for g in grids], axis=1)
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("control grid points are not pairwise distinct")
    return ControlGrid(points=_frozen(pts), lower=_frozen(lo), upper=_frozen(hi))


MASS_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Measure:
    """Nonnegative cell masses summing to one."""

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("measure weights must be a 1-D vector")
        if np.any(w < 0):
            raise ValueError("measure weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"measure weights sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n_x(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def unit(cls, n_x: int, cell: int) -> "Measure":
        """Point mass concentrated on one cell."""
        w = np.zeros(n_x)
        w[cell] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, n_x: int) -> "Measure":
        return cls(np.full(n_x, 1.0 / n_x))

    def support(self, eps: float = 1e-12) -> np.ndarray:
        return np.nonzero(self.weights > eps)[0]


def tv_distance(a: Measure, b: Measure) -> float:
    """Total variation distance: half the 1-norm of the difference."""
    return 0.5 * float(np.abs(a.weights - b.weights).sum())
