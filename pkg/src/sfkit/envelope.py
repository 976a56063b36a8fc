"""Convex envelopes of grid-sampled functions and nonconvexity measures.

A SampledFunction lives on a finite grid and is +inf elsewhere, so its
biconjugate is the lower convex hull of the points (x_j, f(x_j)).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.optimize import linprog

MAX_MULTI_DIM_GRID = 512
RHO_K_BUDGET = 20_000_000


class EnvelopeLimitError(ValueError):
    pass


class RhoBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SampledFunction:
    grid: np.ndarray
    values: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim == 1:
            g = g.reshape(-1, 1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if g.ndim != 2 or g.shape[0] == 0:
            raise ValueError("grid must be a nonempty list of points")
        if g.shape[0] != v.shape[0]:
            raise ValueError(f"grid has {g.shape[0]} points but {v.shape[0]} values")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(v))):
            raise ValueError("grid and values must be finite")
        if g.shape[1] == 1:
            if g.shape[0] > 1 and np.any(np.diff(g[:, 0]) <= 0):
                raise ValueError("1-D grids must be strictly increasing")
        elif np.unique(g, axis=0).shape[0] != g.shape[0]:
            raise ValueError("grid points must be pairwise distinct")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dim", g.shape[1])

    def __len__(self) -> int:
        return self.values.shape[0]

    def interp(self, x) -> np.ndarray:
        """Piecewise-linear interpolation of the samples (1-D only)."""
        if self.dim != 1:
            raise ValueError("interpolation is only defined for 1-D grids")
        x = np.asarray(x, dtype=float)
        lo, hi = self.grid[0, 0], self.grid[-1, 0]
        if np.any(x < lo - 1e-9 * (1 + abs(lo))) or np.any(x > hi + 1e-9 * (1 + abs(hi))):
            raise ValueError("point outside the grid range")
        return np.interp(x, self.grid[:, 0], self.values)

    def to_json(self) -> dict:
        return {"dim": self.dim, "grid": self.grid.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SampledFunction":
        grid = np.asarray(obj["grid"], dtype=float)
        if grid.ndim == 1:
            grid = grid.reshape(-1, 1)
        dim = int(obj.get("dim", grid.shape[1]))
        if grid.shape[1] != dim:
            raise ValueError(f"declared dim {dim} but grid points have {grid.shape[1]} coordinates")
        return cls(grid, obj["values"])


@dataclass(frozen=True)
class ConvexEnvelope:
    """Lower convex envelope. ``at_grid`` holds f** at every grid point."""

    breakpoints: np.ndarray  # indices into the grid
    at_grid: np.ndarray
    grid: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.grid[self.breakpoints]

    @property
    def values(self) -> np.ndarray:
        return self.at_grid[self.breakpoints]

    def __call__(self, x) -> np.ndarray:
        if self.grid.shape[1] != 1:
            raise ValueError("direct evaluation is implemented for 1-D envelopes")
        return np.interp(np.asarray(x, dtype=float), self.grid[self.breakpoints, 0], self.values)


@dataclass
class NonconvexityReport:
    rho: float
    argmax: np.ndarray
    rho_k: dict[int, float]


def _lower_chain(x: np.ndarray, y: np.ndarray) -> list[int]:
    # monotone chain on points already sorted by x; collinear points dropped
    chain: list[int] = []
    for i in range(x.shape[0]):
        while len(chain) >= 2:
            a, b = chain[-2], chain[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                chain.pop()
            else:
                break
        chain.append(i)
    return chain


def _envelope_lp(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    # f**(x_k) = min sum_j t_j f_j  s.t.  sum_j t_j x_j = x_k, t in simplex
    n = grid.shape[0]
    A_eq = np.vstack([grid.T, np.ones((1, n))])
    out = np.empty(n)
    for k in range(n):
        res = linprog(values, A_eq=A_eq, b_eq=np.append(grid[k], 1.0), bounds=(0, None), method="highs")
        out[k] = min(res.fun, values[k]) if res.status == 0 else values[k]
    return out


def _envelope_hull(grid: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lifted = np.column_stack([grid, values])
    hull = ConvexHull(lifted)
    eq = hull.equations  # rows (normal, offset) with normal . p + offset <= 0 inside
    lower = eq[eq[:, -2] < -1e-12]
    # facet plane: f = -(n_x . x + off) / n_f
    slopes = -lower[:, :-2] / lower[:, -2:-1]
    offsets = -lower[:, -1] / lower[:, -2]
    env = np.max(grid @ slopes.T + offsets, axis=1)
    return np.minimum(env, values), lower


def biconjugate(f: SampledFunction, max_grid: int = MAX_MULTI_DIM_GRID) -> ConvexEnvelope:
    """Lower convex envelope of the samples."""
    scale = 1.0 + float(np.max(np.abs(f.values)))
    if f.dim == 1:
        x, y = f.grid[:, 0], f.values
        bp = np.array(_lower_chain(x, y), dtype=int)
        env = np.interp(x, x[bp], y[bp])
        env = np.minimum(env, y)
        return ConvexEnvelope(bp, env, f.grid)
    if len(f) > max_grid:
        raise EnvelopeLimitError(f"grid of {len(f)} points exceeds the limit of {max_grid} for dim {f.dim}")
    if len(f) <= f.dim + 1:
        env = _envelope_lp(f.grid, f.values)
    else:
        try:
            env, _ = _envelope_hull(f.grid, f.values)
        except QhullError:
            # flat or lower-dimensional lifted set
            env = _envelope_lp(f.grid, f.values)
    tol = 1e-10 * scale
    bp = np.flatnonzero(f.values - env <= tol)
    env = np.where(f.values - env <= tol, f.values, env)
    return ConvexEnvelope(bp, env, f.grid)


def _gaps(f: SampledFunction) -> np.ndarray:
    env = biconjugate(f).at_grid
    gap = f.values - env
    scale = 1.0 + float(np.max(np.abs(f.values)))
    gap[gap <= 1e-11 * scale] = 0.0
    return gap


def rho(f: SampledFunction) -> float:
    return float(np.max(_gaps(f)))


def rho_argmax(f: SampledFunction) -> np.ndarray:
    return f.grid[int(np.argmax(_gaps(f)))].copy()


def snap_tolerance(f: SampledFunction) -> float:
    if len(f) < 2:
        return 0.0
    d, _ = cKDTree(f.grid).query(f.grid, k=2)
    return 0.5 * float(d[:, 1].min())


def rho_k(f: SampledFunction, k: int, budget: int = RHO_K_BUDGET) -> float:
    """Largest gain f(sum a_j x_j) - sum a_j f(x_j) using at most k grid points.

    Only combinations landing within the snap tolerance of a grid point are
    scored, with f read at that grid point. For k >= dim + 1 this coincides
    with rho, because the envelope at a grid point is attained by at most
    dim + 1 atoms.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k == 1 or len(f) < 2:
        return 0.0
    if k >= f.dim + 1:
        return rho(f)
    n = len(f)
    work = sum(math.comb(n, s) for s in range(2, k + 1)) * n
    if work > budget:
        raise RhoBudgetExceeded(f"rho_{k} needs about {work:.3g} evaluations, budget is {budget:.3g}")
    tol = snap_tolerance(f)
    scale = 1.0 + float(np.max(np.abs(f.values)))
    best = 0.0
    for s in range(2, k + 1):
        subsets = np.array(list(itertools.combinations(range(n), s)), dtype=int)
        for chunk in np.array_split(subsets, max(1, subsets.shape[0] * n // 2_000_000 + 1)):
            best = max(best, _rho_subsets(f, chunk, tol))
    return 0.0 if best <= 1e-11 * scale else best


def _rho_subsets(f: SampledFunction, subsets: np.ndarray, tol: float) -> float:
    # barycentric coordinates of every grid point w.r.t. every subset, by
    # least squares on the affine system [X; 1] a = [y; 1]
    X = f.grid[subsets]  # (S, s, d)
    M = np.concatenate([np.swapaxes(X, 1, 2), np.ones((X.shape[0], 1, X.shape[1]))], axis=1)
    Y = np.vstack([f.grid.T, np.ones((1, len(f)))])  # (d+1, n)
    pinv = np.linalg.pinv(M)  # (S, s, d+1)
    alpha = pinv @ Y  # (S, s, n)
    pts = np.einsum("sjd,sjn->snd", X, alpha)
    resid = np.linalg.norm(pts - f.grid[None], axis=2)
    ok = (alpha.min(axis=1) >= -1e-12) & (np.abs(alpha.sum(axis=1) - 1) <= 1e-9) & (resid <= tol)
    if not ok.any():
        return 0.0
    gain = f.values[None, :] - np.einsum("sjn,sj->sn", alpha, f.values[subsets])
    return float(np.max(np.where(ok, gain, -np.inf)))


def nonconvexity(f: SampledFunction, ks=(1, 2)) -> NonconvexityReport:
    gaps = _gaps(f)
    i = int(np.argmax(gaps))
    return NonconvexityReport(float(gaps[i]), f.grid[i].copy(), {int(k): rho_k(f, int(k)) for k in ks})
