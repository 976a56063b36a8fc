"""Exact and approximate Caratheodory reductions.

Atoms are stored column-wise: ``atoms`` has shape (D, N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls


class SingularPivot(ArithmeticError):
    pass


class FWBudgetExceeded(RuntimeError):
    def __init__(self, msg, best: "ConicCombination"):
        super().__init__(msg)
        self.best = best


class SamplingExhausted(RuntimeError):
    def __init__(self, msg, best: "SampleResult"):
        super().__init__(msg)
        self.best = best


@dataclass
class ConicCombination:
    atom_indices: np.ndarray
    weights: np.ndarray
    target_dim: int
    error: float = 0.0
    history: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.atom_indices.shape[0])

    def dense(self, N: int) -> np.ndarray:
        w = np.zeros(N)
        w[self.atom_indices] = self.weights
        return w

    def to_json(self) -> dict:
        return {
            "indices": self.atom_indices.tolist(),
            "weights": self.weights.tolist(),
            "error": float(self.error),
            "m": len(self),
        }


@dataclass(frozen=True)
class NormSpec:
    kind: str = "l2"
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("l2", "lp", "linf"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "lp" and self.p < 2:
            raise ValueError("lp norms need p >= 2")

    @property
    def smoothness_D(self) -> float:
        if self.kind == "l2":
            return 1.0
        if self.kind == "lp":
            return math.sqrt(self.p - 1.0)
        return 1.0  # linf goes through the log(4d) route instead

    def __call__(self, v: np.ndarray, axis=None) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == "l2":
            return np.linalg.norm(v, axis=axis)
        if self.kind == "linf":
            return np.max(np.abs(v), axis=axis) if v.size else np.float64(0.0)
        return np.sum(np.abs(v) ** self.p, axis=axis) ** (1.0 / self.p)


L2 = NormSpec("l2")


def reduce_conic(atoms: np.ndarray, weights: np.ndarray, rtol: float = 1e-12) -> ConicCombination:
    """Rewrite ``atoms @ weights`` with at most D atoms (rank of the atoms).

    Columns are scanned in order while a Gauss-Jordan tableau of the current
    basis is maintained. A column that depends on the basis yields a null
    vector; stepping along it drives one weight to zero. When the weight that
    vanishes belongs to the basis, the new column pivots in.
    """
    A = np.asarray(atoms, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    D, N = A.shape
    if w.shape[0] != N:
        raise ValueError(f"{N} atoms but {w.shape[0]} weights")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if not np.all(np.isfinite(A)):
        raise ValueError("atoms must be finite")
    target = A @ w
    active = np.flatnonzero(w > 0)
    if active.size == 0:
        return ConicCombination(np.zeros(0, dtype=int), np.zeros(0), D)
    M = A[:, active]
    wa = w[active].copy()
    k = active.size
    piv_tol = rtol * max(float(np.max(np.abs(M))), 1e-300)

    T = M.copy()  # tableau; basic columns become unit vectors
    basis_col = np.full(D, -1, dtype=int)  # pivot row -> basic column
    alive = np.ones(k, dtype=bool)

    def pivot(r: int, j: int):
        # columns before j are unit vectors or dead, so only update j onwards
        T[r, j:] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T[:, j:] -= col[:, None] * T[r, j:]

    n_basic = 0
    rows = cols = np.zeros(0, dtype=int)
    for j in range(k):
        if n_basic < D:
            cand = np.where(basis_col < 0, np.abs(T[:, j]), -1.0)
            r = int(np.argmax(cand))
            if cand[r] > piv_tol:
                pivot(r, j)
                basis_col[r] = j
                n_basic += 1
                rows = np.flatnonzero(basis_col >= 0)
                cols = basis_col[rows]
                continue
        # column j = sum_r T[r, j] * column basis_col[r]; null vector has
        # z_j = 1 and z_b = -T[r, j]. Move w <- w - t z.
        coef = T[rows, j]
        t, leave, leave_row = wa[j], j, -1
        shrink = coef < -piv_tol
        if shrink.any():
            sc = cols[shrink]
            ratios = wa[sc] / -coef[shrink]
            rmin = ratios.min()
            if rmin <= t:
                # Bland-style tie break: lowest column index leaves
                i0 = int(np.argmin(np.where(ratios == rmin, sc, k + 1)))
                if rmin < t or sc[i0] < j:
                    t, leave, leave_row = rmin, int(sc[i0]), int(rows[shrink][i0])
        wa[j] -= t
        wa[cols] += t * coef
        wa[leave] = 0.0
        np.maximum(wa, 0.0, out=wa)
        if leave == j:
            alive[j] = False
            continue
        if abs(T[leave_row, j]) <= piv_tol:
            raise SingularPivot(f"pivot {T[leave_row, j]:.3e} below tolerance {piv_tol:.3e} at column {active[j]}")
        pivot(leave_row, j)
        basis_col[leave_row] = j
        cols = basis_col[rows]
        alive[leave] = False

    basics = basis_col[basis_col >= 0]
    keep = np.sort(basics[alive[basics] & (wa[basics] > 0)])
    idx = active[keep]
    vals = wa[keep]
    # polish on the final (independent) support
    if idx.size:
        sol, *_ = np.linalg.lstsq(A[:, idx], target, rcond=None)
        if np.all(sol >= -1e-14 * max(1.0, float(np.max(np.abs(sol))))):
            vals = np.maximum(sol, 0.0)
    nz = vals > 0
    idx, vals = idx[nz], vals[nz]
    err = float(np.linalg.norm(A[:, idx] @ vals - target))
    scale = 1.0 + float(np.max(np.abs(M))) * float(w.sum())
    if err > 1e-10 * scale:
        # nearly singular pivots: nonnegative least squares keeps its passive
        # set linearly independent, so its support also stays within D
        sol, _ = nnls(M, target)
        nz = np.flatnonzero(sol > 0)
        alt = float(np.linalg.norm(M[:, nz] @ sol[nz] - target))
        if alt < err and nz.size <= D:
            idx, vals, err = active[nz], sol[nz], alt
    return ConicCombination(idx, vals, D, error=err)


def reduce_convex(atoms: np.ndarray, weights: np.ndarray) -> ConicCombination:
    """Convex combination with at most D + 1 atoms, via the lifted conic problem."""
    A = np.asarray(atoms, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to one")
    lifted = np.vstack([A, np.ones((1, A.shape[1]))])
    out = reduce_conic(lifted, w)
    vals = out.weights / out.weights.sum() if len(out) else out.weights
    err = float(np.linalg.norm(A[:, out.atom_indices] @ vals - A @ w))
    return ConicCombination(out.atom_indices, vals, A.shape[0], error=err)


def fw_budget(p: float, D_p: float, epsilon: float) -> int:
    return max(1, math.ceil(8.0 * p * D_p**2 / epsilon**2 - 1e-9))


def fw_approx(target: np.ndarray, atoms: np.ndarray, epsilon: float, p: float = 2.0) -> ConicCombination:
    """Sparse convex approximation of ``target`` by Frank-Wolfe with exact line search.

    Minimizes ||target - V w||_2^2 over the simplex and stops as soon as the
    l_p error is at most ``epsilon`` (for p >= 2 the l_p norm is dominated
    by the Euclidean one). The atom budget is ceil(8 p D_p^2 / eps^2) with
    D_p the largest l_p norm of an atom.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    V = np.asarray(atoms, dtype=float)
    if V.ndim == 1:
        V = V.reshape(1, -1)
    x = np.asarray(target, dtype=float).reshape(-1)
    norm = NormSpec("lp", p) if p != 2 else L2
    D_p = float(np.max(norm(V, axis=0)))
    budget = fw_budget(p, D_p, epsilon)
    N = V.shape[1]

    j0 = int(np.argmin(np.linalg.norm(V - x[:, None], axis=0)))  # argmin picks lowest index on ties
    w = np.zeros(N)
    w[j0] = 1.0
    cur = V[:, j0].copy()
    history = [float(np.linalg.norm(x - cur))]
    err = float(norm(x - cur))
    while err > epsilon:
        if np.count_nonzero(w) >= budget:
            best = ConicCombination(np.flatnonzero(w), w[w > 0], V.shape[0], err, history)
            raise FWBudgetExceeded(f"error {err:.4g} > {epsilon:.4g} after {budget} atoms", best)
        grad = cur - x
        j = int(np.argmin(grad @ V))
        d = V[:, j] - cur
        dd = float(d @ d)
        if dd == 0.0 or float(-grad @ d) <= 0.0:
            best = ConicCombination(np.flatnonzero(w), w[w > 0], V.shape[0], err, history)
            raise FWBudgetExceeded(f"stalled at error {err:.4g}; target may lie outside the hull", best)
        step = min(1.0, float(-grad @ d) / dd)
        w *= 1.0 - step
        w[j] += step
        cur = cur + step * d
        history.append(float(np.linalg.norm(x - cur)))
        err = float(norm(x - cur))
    idx = np.flatnonzero(w)
    return ConicCombination(idx, w[idx], V.shape[0], err, history)


@dataclass
class SamplingPlan:
    N: int
    epsilon: float
    R: float
    m: int
    variant: str
    c: float
    delta0: float = 0.5
    R_v: float = 0.0
    R_lambda: float = 0.0


def default_c(dim: int) -> float:
    return 2.0 * math.log(4.0 * dim)


def sample_size(N: int, epsilon: float, R: float, t_coef: float) -> int:
    t = t_coef * (math.sqrt(N) * R / epsilon) ** 2
    m = 1.0 + N * t / (1.0 + t) if math.isfinite(t) else 1.0 + N
    return int(min(N, max(1, math.ceil(m - 1e-9))))


def required_sample_size(
    N: int,
    epsilon: float,
    R: float,
    variant: str = "linf",
    dim: int | None = None,
    c: float | None = None,
    R_v: float = 0.0,
    R_lambda: float = 0.0,
) -> SamplingPlan:
    """Sample size for the high-sampling-ratio Caratheodory theorems.

    ``linf`` uses t = 2 log(4 dim) (sqrt(N) R / eps)^2; ``banach`` uses
    t = c (sqrt(N) R / eps)^2 with c defaulting to 2 log(4 dim). The size
    is ceil(1 + N t / (1 + t)) clamped to [1, N].
    """
    if N < 1:
        raise ValueError("N must be positive")
    if epsilon <= 0 or R < 0:
        raise ValueError("need epsilon > 0 and R >= 0")
    if variant == "linf":
        if dim is None:
            raise ValueError("the linf variant needs the ambient dimension")
        coef = default_c(dim)
    elif variant == "banach":
        coef = c if c is not None else default_c(dim or 1)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return SamplingPlan(N, epsilon, R, sample_size(N, epsilon, R, coef), variant, coef, R_v=R_v, R_lambda=R_lambda)


def plan_for(atoms, weights, epsilon: float, variant: str = "banach", norm: NormSpec = L2, c=None) -> SamplingPlan:
    """Plan with R = max(D R_v, R_lambda) measured on the given combination."""
    V = np.asarray(atoms, dtype=float)
    lam = np.asarray(weights, dtype=float)
    R_v = float(np.max(norm(V * lam[None, :], axis=0)))
    R_l = float(np.max(np.abs(lam)))
    D = norm.smoothness_D if variant == "banach" else 1.0
    R = max(D * R_v, R_l)
    return required_sample_size(V.shape[1], epsilon, R, variant, dim=V.shape[0], c=c, R_v=R_v, R_lambda=R_l)


@dataclass
class SampleResult:
    combination: ConicCombination
    x_error: float
    weight_error: float
    attempts: int
    ok: bool


def sample_without_replacement(
    atoms,
    weights,
    plan: SamplingPlan,
    seed=0,
    norm: NormSpec | None = None,
    max_retries: int = 64,
) -> SampleResult:
    """Keep a uniform size-m subset J and rescale mu_j = (N/m) lambda_j.

    Draws are repeated until both ||x - x_hat|| and |sum mu - 1| are at most
    epsilon; raises SamplingExhausted with the best attempt otherwise.
    """
    V = np.asarray(atoms, dtype=float)
    if V.ndim == 1:
        V = V.reshape(1, -1)
    lam = np.asarray(weights, dtype=float).reshape(-1)
    N = V.shape[1]
    if plan.m > N or plan.m < 1:
        raise ValueError(f"plan size {plan.m} outside [1, {N}]")
    if norm is None:
        norm = NormSpec("linf") if plan.variant == "linf" else L2
    rng = np.random.default_rng(seed)
    x = V @ lam
    best = None
    for attempt in range(1, max_retries + 1):
        J = np.sort(rng.choice(N, size=plan.m, replace=False))
        mu = (N / plan.m) * lam[J]
        x_err = float(norm(x - V[:, J] @ mu))
        w_err = abs(float(mu.sum()) - 1.0)
        keep = mu > 0
        res = SampleResult(ConicCombination(J[keep], mu[keep], V.shape[0], x_err), x_err, w_err, attempt, False)
        if x_err <= plan.epsilon and w_err <= plan.epsilon:
            res.ok = True
            return res
        if best is None or max(x_err, w_err) < max(best.x_error, best.weight_error):
            best = res
    raise SamplingExhausted(
        f"no draw met epsilon={plan.epsilon:.4g} in {max_retries} attempts "
        f"(best x error {best.x_error:.4g}, weight error {best.weight_error:.4g})",
        best,
    )
