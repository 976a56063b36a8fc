"""Finite point-set geometry: Minkowski averages, planar hulls, Hausdorff distance.

Everything here works on finite samples. Hausdorff distances are sample-level
estimates of the distance between the underlying continuous sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray
    label: str = ""
    dim: int = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("a PointSet needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"PointSet {self.label!r} has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dim", pts.shape[1])

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_json(self) -> dict:
        return {"label": self.label, "dim": self.dim, "points": self.points.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "PointSet":
        pts = np.asarray(obj["points"], dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        dim = int(obj.get("dim", pts.shape[1]))
        if pts.shape[1] != dim:
            raise DimensionMismatch(f"declared dim {dim} but points have {pts.shape[1]} coordinates")
        return cls(pts, label=str(obj.get("label", "")))


@dataclass(frozen=True)
class HullPolygon:
    """Counterclockwise hull vertices starting at the lexicographic minimum."""

    vertices: np.ndarray
    degenerate: bool = False

    def __len__(self) -> int:
        return self.vertices.shape[0]


def _first_per_cell(points: np.ndarray, lo: np.ndarray, width: float) -> np.ndarray:
    """Index of the first point falling in each occupied cell, in point order."""
    cells = np.floor((points - lo) / width).astype(np.int64)
    dims = cells.max(axis=0) + 1
    if float(np.prod(dims.astype(float))) <= 5e7:
        keys = np.ravel_multi_index(cells.T, dims)
        first = np.full(int(np.prod(dims)), points.shape[0], dtype=np.int64)
        np.minimum.at(first, keys, np.arange(points.shape[0]))
        return np.sort(first[first < points.shape[0]])
    _, idx = np.unique(cells, axis=0, return_index=True)
    return np.sort(idx)


def unique_rows(points: np.ndarray, decimals: int = 12) -> np.ndarray:
    """Drop duplicate rows (after rounding), keeping first occurrences in order."""
    key = np.round(points, decimals) + 0.0  # +0.0 folds -0.0 into 0.0
    _, idx = np.unique(key, axis=0, return_index=True)
    return points[np.sort(idx)]


def _thin(points: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    # Voxel thinning: one representative per grid cell, the cell width grown
    # until at most `cap` cells are occupied. Keeps the sample spread over
    # the whole set, so boundary regions survive. The grid origin is jittered
    # by the rng so repeated thinning does not lock onto one lattice.
    if points.shape[0] <= cap:
        return points
    base = points.min(axis=0)
    span = np.maximum(points.max(axis=0) - base, 1e-12)
    d = points.shape[1]
    width = float(np.prod(span) / (4 * cap)) ** (1.0 / d)
    while True:
        lo = base - width * rng.random(d)
        idx = _first_per_cell(points, lo, width)
        if idx.size <= cap:
            return points[idx]
        width *= max(1.03, (idx.size / cap) ** (1.0 / d))


def _reduce(points: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    # thinning already merges duplicates, so exact deduplication is only
    # needed when the product is small enough to be kept whole
    if points.shape[0] <= cap:
        return unique_rows(points)
    return _thin(points, cap, rng)


def minkowski_average(sets: list[PointSet], cap: int = 8192, seed: int = 0) -> PointSet:
    """Return the Minkowski average ``{(1/n) sum_i v_i : v_i in V_i}``.

    The average is accumulated one set at a time. Whenever an intermediate
    product exceeds ``cap`` points it is thinned on a regular grid, with a
    seeded choice of the representative kept in each cell. Below the cap the
    result is exact (up to removal of duplicate points).
    """
    if not sets:
        raise ValueError("minkowski_average needs at least one set")
    if cap < 1:
        raise ValueError("cap must be positive")
    dim = sets[0].dim
    for s in sets:
        if s.dim != dim:
            raise DimensionMismatch(f"set {s.label!r} has dim {s.dim}, expected {dim}")
    rng = np.random.default_rng(seed)
    acc = _reduce(sets[0].points, cap, rng)
    for k, s in enumerate(sets[1:], start=2):
        # running average: A_k = ((k-1)/k) A_{k-1} + (1/k) V_k
        summed = ((k - 1) / k) * acc[:, None, :] + (1.0 / k) * s.points[None, :, :]
        acc = _reduce(summed.reshape(-1, dim), cap, rng)
    label = "avg(" + ",".join(s.label or "?" for s in sets) + ")" if len(sets) > 1 else sets[0].label
    return PointSet(acc, label=label)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points: PointSet | np.ndarray) -> HullPolygon:
    """Andrew's monotone chain. Collinear boundary points are dropped."""
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DimensionMismatch("convex_hull_2d needs 2-D points")
    pts = unique_rows(pts)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    if pts.shape[0] == 1:
        return HullPolygon(pts.copy(), degenerate=True)
    scale = float(np.max(np.abs(pts))) or 1.0
    tol = 1e-12 * scale * scale

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= tol:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) <= 2:
        # all points collinear: keep the two extreme endpoints
        return HullPolygon(np.array([pts[0], pts[-1]]), degenerate=True)
    return HullPolygon(np.array(hull), degenerate=False)


def hausdorff_distance(P: PointSet | np.ndarray, Q: PointSet | np.ndarray) -> float:
    p = P.points if isinstance(P, PointSet) else np.atleast_2d(np.asarray(P, dtype=float))
    q = Q.points if isinstance(Q, PointSet) else np.atleast_2d(np.asarray(Q, dtype=float))
    if p.shape[1] != q.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {p.shape[1]} vs {q.shape[1]}")
    d_pq, _ = cKDTree(q).query(p)
    d_qp, _ = cKDTree(p).query(q)
    return float(max(d_pq.max(), d_qp.max()))


def lp_sphere(p: float = 0.5, samples: int = 256, label: str | None = None) -> PointSet:
    """Angle-uniform sample of the unit l_p sphere in the plane."""
    t = 2.0 * np.pi * np.arange(samples) / samples
    c, s = np.cos(t), np.sin(t)
    e = 2.0 / p
    pts = np.column_stack([np.sign(c) * np.abs(c) ** e, np.sign(s) * np.abs(s) ** e])
    pts[np.abs(pts) < 1e-15] = 0.0
    return PointSet(pts, label=label or f"l{p:g}-sphere")


def l1_ball_sample(spacing: float = 0.02) -> PointSet:
    """Filled sample of the planar unit l1 ball: a square lattice plus its boundary."""
    ticks = np.arange(-1.0, 1.0 + spacing / 2, spacing)
    xx, yy = np.meshgrid(ticks, ticks)
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    grid = grid[np.abs(grid).sum(axis=1) <= 1.0 + 1e-12]
    t = np.linspace(0.0, 1.0, int(round(1.0 / spacing)) + 1)
    edge = np.column_stack([1.0 - t, t])
    border = np.vstack([edge * [sx, sy] for sx in (1, -1) for sy in (1, -1)])
    return PointSet(unique_rows(np.vstack([grid, border])), label="l1-ball")


def minkowski_decay(
    n_list: list[int], samples: int = 256, cap: int = 8192, seed: int = 0, p: float = 0.5
) -> list[tuple[int, float, PointSet]]:
    """Hausdorff distance between averages of n copies of an l_p sphere and the l1 ball.

    The averages for all requested n are built along one running sequence.
    """
    if not n_list or min(n_list) < 1:
        raise ValueError("n_list must hold positive integers")
    sphere = lp_sphere(p, samples)
    ref = l1_ball_sample()
    rng = np.random.default_rng(seed)
    wanted = set(n_list)
    snapshots = {}
    acc = _reduce(sphere.points, cap, rng)
    for k in range(1, max(n_list) + 1):
        if k > 1:
            summed = ((k - 1) / k) * acc[:, None, :] + (1.0 / k) * sphere.points[None, :, :]
            acc = _reduce(summed.reshape(-1, 2), cap, rng)
        if k in wanted:
            snapshots[k] = PointSet(acc, label=f"avg{k}")
    return [(n, hausdorff_distance(snapshots[n], ref), snapshots[n]) for n in n_list]
