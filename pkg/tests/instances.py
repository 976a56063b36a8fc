"""Random instance generators shared by the unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from sfkit.envelope import SampledFunction
from sfkit.geometry import PointSet
from sfkit.relaxation import SeparableProblem
from sfkit.shapley_folkman import BlockFamily

TICKS = np.linspace(-1.0, 1.0, 41)


def random_problem(rng: np.random.Generator, n: int | None = None, K: int = 4, m: int | None = None) -> SeparableProblem:
    """Scalar blocks on random grids; b is chosen so a grid point is feasible."""
    n = n or int(rng.integers(1, 11))
    m = int(rng.integers(1, 4)) if m is None else m
    blocks = []
    for _ in range(n):
        k = int(rng.integers(1, K + 1))
        g = np.sort(rng.choice(TICKS, size=k, replace=False))
        blocks.append(SampledFunction(g, rng.normal(size=k)))
    A = rng.normal(size=(m, n))
    x0 = np.array([rng.choice(f.grid[:, 0]) for f in blocks])
    b = A @ x0 + rng.random(m) * 0.3
    return SeparableProblem(blocks, A, b)


def convex_problem(rng: np.random.Generator, n: int = 5, m: int = 2) -> SeparableProblem:
    blocks = []
    for _ in range(n):
        g = np.sort(rng.choice(TICKS, size=4, replace=False))
        blocks.append(SampledFunction(g, float(rng.uniform(0.5, 2.0)) * g**2 + float(rng.normal()) * g))
    A = rng.normal(size=(m, n))
    b = A @ np.array([f.grid[0, 0] for f in blocks]) + 0.5
    return SeparableProblem(blocks, A, b)


def random_family(rng: np.random.Generator, d: int | None = None, n: int | None = None, max_atoms: int = 6) -> BlockFamily:
    d = d or int(rng.integers(1, 6))
    n = n or int(rng.integers(1, 51))
    blocks, weights = [], []
    for i in range(n):
        k = int(rng.integers(1, max_atoms + 1))
        pts = rng.normal(size=(k, d))
        if k > 1 and rng.random() < 0.2:
            pts[-1] = pts[0]  # repeated atoms
        w = rng.random(k) * (rng.random(k) > 0.2)
        if w.sum() == 0:
            w[0] = 1.0
        blocks.append(PointSet(pts, label=str(i)))
        weights.append(w / w.sum())
    return BlockFamily(blocks, weights)


def random_atoms(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    D = int(rng.integers(1, 8))
    N = int(rng.integers(1, 40))
    V = rng.normal(size=(D, N))
    if N > 2 and rng.random() < 0.3:
        V[:, -1] = V[:, 0] + V[:, 1]  # built-in dependency
    w = rng.random(N) * (rng.random(N) > 0.1)
    return V, w
