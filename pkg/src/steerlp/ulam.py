"""Controlled transition matrices and discretized stage costs.

For every control on the grid, the one-step map is approximated by a
row-stochastic matrix: each cell is sampled on a deterministic regular
subgrid, the samples are pushed through the map, and entry (i, j) is the
fraction of cell i's samples landing in cell j. Clamped maps are total, so
every row sums to one.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .grid import ControlGrid, Measure, Partition, locate_batch, quadrature_points
from .systems import SystemMap

ROW_SUM_TOLERANCE = 1e-12
DENSE_CELL_LIMIT = 256


@dataclass
class TransitionTensor:
    """Per-control transition matrices of the discretized dynamics.

    Matrices are dense below DENSE_CELL_LIMIT cells and CSR-sparse above.
    """

    matrices: list
    q: int
    partition_fingerprint: str
    controls_fingerprint: str
    n_x: int = field(init=False)
    n_u: int = field(init=False)

    def __post_init__(self):
        if not self.matrices:
            raise ValueError("tensor needs at least one control matrix")
        shapes = {m.shape for m in self.matrices}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent matrix shapes: {shapes}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise ValueError(f"transition matrices must be square, got {shape}")
        self.n_x = shape[0]
        self.n_u = len(self.matrices)
        for k, m in enumerate(self.matrices):
            data = m.data if sparse.issparse(m) else m
            if np.any(data < -1e-15) or np.any(data > 1.0 + 1e-12):
                raise ValueError(f"control {k}: entries outside [0, 1]")
            dev = np.abs(self.row_sums(k) - 1.0).max()
            if dev > ROW_SUM_TOLERANCE:
                raise ValueError(f"control {k}: row sums deviate from 1 by {dev:.3e}")

    def matrix(self, k: int):
        return self.matrices[k]

    def row(self, k: int, i: int) -> np.ndarray:
        m = self.matrices[k]
        if sparse.issparse(m):
            return np.asarray(m.getrow(i).todense()).ravel()
        return np.asarray(m[i])

    def row_sums(self, k: int) -> np.ndarray:
        m = self.matrices[k]
        if sparse.issparse(m):
            return np.asarray(m.sum(axis=1)).ravel()
        return m.sum(axis=1)

    def apply(self, weights: np.ndarray, k: int) -> np.ndarray:
        """Push a weight vector through control k's chain: w -> w P^k."""
        out = weights @ self.matrices[k]
        return np.asarray(out).ravel()

    def push_measure(self, mu: Measure, k: int) -> Measure:
        return Measure(np.maximum(self.apply(mu.weights, k), 0.0))

    def support_adjacency(self) -> np.ndarray:
        """Boolean (n_x, n_x): edge where any control gives positive probability."""
        adj = np.zeros((self.n_x, self.n_x), dtype=bool)
        for m in self.matrices:
            if sparse.issparse(m):
                adj |= np.asarray(m.todense()) > 0
            else:
                adj |= m > 0
        return adj

    def control_adjacency(self, k: int) -> np.ndarray:
        m = self.matrices[k]
        if sparse.issparse(m):
            return np.asarray(m.todense()) > 0
        return m > 0

    @property
    def nnz(self) -> int:
        return sum(int(m.nnz) if sparse.issparse(m) else int(np.count_nonzero(m))
                   for m in self.matrices)

    def triplets(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nonzero entries of control k as (rows, cols, values), row-major order."""
        m = self.matrices[k]
        coo = sparse.coo_matrix(m)
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


def _rows_for_control(images: np.ndarray, partition: Partition, n_pts_per_cell: int):
    """COO triplets for one control from the images of all cells' samples."""
    n_x = partition.n_x
    cols = locate_batch(partition, images)
    rows = np.repeat(np.arange(n_x, dtype=np.int64), n_pts_per_cell)
    # duplicate (row, col) sample hits are summed by the CSR conversion
    return sparse.coo_matrix(
        (np.full(rows.shape, 1.0 / n_pts_per_cell), (rows, cols)),
        shape=(n_x, n_x),
    ).tocsr()


def build_tensor(system: SystemMap, partition: Partition, controls: ControlGrid,
                 q: int = 8, workers: int = 1) -> TransitionTensor:
    """Discretize the controlled map into one transition matrix per control.

    Each cell contributes q^d deterministic subgrid samples; entry (i, j) of
    matrix k is the fraction of cell i's samples mapped into cell j under
    control k. Identical inputs produce bit-identical tensors.
    """
    if q < 1:
        raise ValueError(f"quadrature order must be >= 1, got {q}")
    pts = np.concatenate(
        [quadrature_points(partition, i, q) for i in range(partition.n_x)], axis=0
    )
    n_pts_per_cell = q ** partition.dim
    images = system.step_many(pts, controls.points)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mats = list(pool.map(
                lambda k: _rows_for_control(images[k], partition, n_pts_per_cell),
                range(controls.n_u),
            ))
    else:
        mats = [_rows_for_control(images[k], partition, n_pts_per_cell)
                for k in range(controls.n_u)]

    if partition.n_x < DENSE_CELL_LIMIT:
        mats = [np.asarray(m.todense()) for m in mats]
    return TransitionTensor(
        matrices=mats,
        q=q,
        partition_fingerprint=partition.fingerprint(),
        controls_fingerprint=controls.fingerprint(),
    )


@dataclass(frozen=True)
class CostTable:
    """Stage cost integrated over each cell, one column per control."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("cost table must be an (n_x, n_u) matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("cost table entries must be finite")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @property
    def n_u(self) -> int:
        return self.values.shape[1]

    def scaled(self, factor: float) -> "CostTable":
        return CostTable(self.values * factor)


def build_cost_table(partition: Partition, controls: ControlGrid, cost,
                     q: int = 8, scaling: str = "integral") -> CostTable:
    """Tabulate the stage cost over (cell, control) pairs.

    ``cost(points, u)`` must map an (m, d) batch of states and one control
    vector to an (m,) array. With scaling="integral" (default) each entry is
    the midpoint-rule estimate of the integral of the cost over the cell;
    scaling="average" divides by the cell volume.
    """
    if q < 1:
        raise ValueError(f"quadrature order must be >= 1, got {q}")
    if scaling not in ("integral", "average"):
        raise ValueError(f"scaling must be 'integral' or 'average', got {scaling!r}")
    pts = np.concatenate(
        [quadrature_points(partition, i, q) for i in range(partition.n_x)], axis=0
    )
    n_pts = q ** partition.dim
    factor = partition.cell_volume if scaling == "integral" else 1.0
    table = np.empty((partition.n_x, controls.n_u))
    for k in range(controls.n_u):
        vals = np.asarray(cost(pts, controls.points[k]), dtype=np.float64)
        table[:, k] = vals.reshape(partition.n_x, n_pts).mean(axis=1) * factor
    return CostTable(table)


def quadrature_refinement_gap(system: SystemMap, partition: Partition,
                              controls: ControlGrid, q: int):
    """Measured sensitivity of tensor entries to doubling the sample order.

    Returns (max entry difference between orders q and 2q, measured bound),
    where the bound is the largest per-(cell, control) fraction of order-2q
    samples whose image lies within one subcell-image diameter of a cell
    boundary. Only samples near a boundary can switch cells under refinement.
    """
    coarse = build_tensor(system, partition, controls, q=q)
    fine = build_tensor(system, partition, controls, q=2 * q)
    max_diff = 0.0
    for k in range(controls.n_u):
        a = coarse.matrix(k)
        b = fine.matrix(k)
        if sparse.issparse(a):
            diff = abs(a - b).max()
        else:
            diff = np.abs(a - b).max()
        max_diff = max(max_diff, float(diff))

    qf = 2 * q
    n_pts = qf ** partition.dim
    pts = np.concatenate(
        [quadrature_points(partition, i, qf) for i in range(partition.n_x)], axis=0
    )
    images = system.step_many(pts, controls.points)
    widths = partition.widths
    bound = 0.0
    for k in range(controls.n_u):
        img = images[k].reshape(partition.n_x, n_pts, partition.dim)
        # diameter of one subcell's image, estimated from the cell image spread
        spread = img.max(axis=1) - img.min(axis=1)
        radius = np.linalg.norm(spread, axis=1) / q
        rel = (img - partition.lower) / widths
        frac = rel - np.round(rel)
        dist = np.abs(frac * widths).min(axis=2)
        near = dist <= radius[:, None]
        bound = max(bound, float(near.mean(axis=1).max()))
    return max_diff, bound


_MAGIC = b"ULAMTENS"
_VERSION = 1


def save_tensor(tensor: TransitionTensor, path) -> None:
    """Write the tensor in the little-endian binary triplet format."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQI", _VERSION, tensor.n_x, tensor.n_u, tensor.q))
        fh.write(bytes.fromhex(tensor.partition_fingerprint))
        fh.write(bytes.fromhex(tensor.controls_fingerprint))
        for k in range(tensor.n_u):
            rows, cols, vals = tensor.triplets(k)
            fh.write(struct.pack("<Q", len(vals)))
            rec = np.empty(len(vals), dtype=[("i", "<u4"), ("j", "<u4"), ("p", "<f8")])
            rec["i"], rec["j"], rec["p"] = rows, cols, vals
            fh.write(rec.tobytes())


def load_tensor(path) -> TransitionTensor:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a tensor file: bad magic {magic!r}")
        version, n_x, n_u, q = struct.unpack("<IQQI", fh.read(24))
        if version != _VERSION:
            raise ValueError(f"unsupported tensor file version {version}")
        part_fp = fh.read(32).hex()
        ctrl_fp = fh.read(32).hex()
        mats = []
        for _ in range(n_u):
            (nnz,) = struct.unpack("<Q", fh.read(8))
            rec = np.frombuffer(
                fh.read(nnz * 16), dtype=[("i", "<u4"), ("j", "<u4"), ("p", "<f8")]
            )
            m = sparse.coo_matrix(
                (rec["p"], (rec["i"], rec["j"])), shape=(n_x, n_x)
            ).tocsr()
            mats.append(np.asarray(m.todense()) if n_x < DENSE_CELL_LIMIT else m)
    return TransitionTensor(matrices=mats, q=q,
                            partition_fingerprint=part_fp,
                            controls_fingerprint=ctrl_fp)


def export_tensor_text(tensor: TransitionTensor, path) -> None:
    """Human-readable export: one "k i j p" line per nonzero entry."""
    with open(path, "w") as fh:
        fh.write(f"# transition tensor: n_x={tensor.n_x} n_u={tensor.n_u} q={tensor.q}\n")
        fh.write(f"# partition={tensor.partition_fingerprint}\n")
        fh.write(f"# controls={tensor.controls_fingerprint}\n")
        fh.write("k i j p\n")
        for k in range(tensor.n_u):
            rows, cols, vals = tensor.triplets(k)
            for i, j, p in zip(rows, cols, vals):
                fh.write(f"{k} {i} {j} {float(p)!r}\n")
