"""Convex relaxation of separable problems and duality-gap certificates.

Problem (P): minimize sum_i f_i(x_i) subject to sum_i A_i x_i <= b, where
each f_i is a SampledFunction. The relaxation is the LP over per-block
simplex weights on the grid atoms, which is the same as minimizing
sum_i f_i** over the convex hulls of the grids.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from . import envelope
from .caratheodory import default_c
from .envelope import SampledFunction
from .lp import linprog
from .shapley_folkman import mv_constant

ACTIVE_RTOL = 1e-7
ENUM_LIMIT = 1_000_000


class InfeasibleProblem(ValueError):
    pass


class EnumerationBudgetExceeded(RuntimeError):
    pass


class RhoFallbackWarning(UserWarning):
    pass


@dataclass
class SeparableProblem:
    blocks: list[SampledFunction]
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("need at least one block")
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        d = sum(f.dim for f in self.blocks)
        if self.A.shape[1] != d:
            raise ValueError(f"A has {self.A.shape[1]} columns, blocks need {d}")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A and b disagree on the number of rows")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("A and b must be finite")

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def block_slices(self) -> list[slice]:
        out, k = [], 0
        for f in self.blocks:
            out.append(slice(k, k + f.dim))
            k += f.dim
        return out

    def block_images(self) -> list[np.ndarray]:
        """A_i g_ij for every atom, shape (K_i, m) per block."""
        return [f.grid @ self.A[:, sl].T for f, sl in zip(self.blocks, self.block_slices())]

    def to_json(self) -> dict:
        return {"blocks": [f.to_json() for f in self.blocks], "A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SeparableProblem":
        blocks = [SampledFunction.from_json(f) for f in obj["blocks"]]
        A = np.asarray(obj["A"], dtype=float)
        if A.size == 0:
            A = np.zeros((0, sum(f.dim for f in blocks)))
        return cls(blocks, A, obj["b"])


@dataclass
class RelaxationSolution:
    theta: list[np.ndarray]
    x_blocks: list[np.ndarray]
    value: float
    dual_lambda: np.ndarray
    slack: np.ndarray
    active: np.ndarray

    @property
    def x_star(self) -> np.ndarray:
        return np.concatenate(self.x_blocks) if self.x_blocks else np.zeros(0)

    @property
    def m_tilde(self) -> int:
        return int(self.active.size)

    @property
    def mixed(self) -> list[int]:
        return [i for i, t in enumerate(self.theta) if np.count_nonzero(t) >= 2]

    @property
    def nonzeros(self) -> int:
        return int(sum(np.count_nonzero(t) for t in self.theta))

    def complementary_slackness(self) -> float:
        return float(np.max(np.abs(self.dual_lambda * self.slack))) if self.slack.size else 0.0


def _lp_data(p: SeparableProblem, u=None):
    imgs = p.block_images()
    c = np.concatenate([f.values for f in p.blocks])
    C = np.vstack(imgs).T if p.m else np.zeros((0, c.size))
    sizes = [len(f) for f in p.blocks]
    E = np.zeros((p.n, c.size))
    k = 0
    for i, s in enumerate(sizes):
        E[i, k:k + s] = 1.0
        k += s
    b = p.b if u is None else p.b + np.asarray(u, dtype=float)
    return c, C, b, E, sizes


def solve_relaxation(p: SeparableProblem) -> RelaxationSolution:
    c, C, b, E, sizes = _lp_data(p)
    res = linprog(c, A_ub=C if p.m else None, b_ub=b if p.m else None, A_eq=E, b_eq=np.ones(p.n))
    if res.status == "infeasible":
        raise InfeasibleProblem("no convex combination of grid atoms satisfies the coupling constraints")
    if not res.ok:
        raise RuntimeError(f"relaxation LP ended with status {res.status}")
    theta, xs, k = [], [], 0
    for f, s in zip(p.blocks, sizes):
        t = res.x[k:k + s].copy()
        t[t < 1e-13] = 0.0
        t /= t.sum()
        theta.append(t)
        xs.append(f.grid.T @ t)
        k += s
    value = float(sum(f.values @ t for f, t in zip(p.blocks, theta)))
    Ax = p.A @ np.concatenate(xs) if p.m else np.zeros(0)
    slack = p.b - Ax
    active = np.flatnonzero(slack <= ACTIVE_RTOL * (1.0 + np.abs(p.b)))
    return RelaxationSolution(theta, xs, value, res.ineq_duals, slack, active)


def dual_value(p: SeparableProblem, lam) -> float:
    """Lagrange dual function sum_i min_j [f_ij + lam^T A_i g_ij] - lam^T b."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape[0] != p.m:
        raise ValueError(f"expected {p.m} multipliers")
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    total = -float(lam @ p.b)
    for f, img in zip(p.blocks, p.block_images()):
        total += float(np.min(f.values + img @ lam))
    return total


@dataclass
class PurifyResult:
    choice: list[int]
    x_hat: list[np.ndarray]
    upper: float
    feasible: bool
    violation: np.ndarray
    hull_upper: float | None


def purify(sol: RelaxationSolution, p: SeparableProblem, seed=None) -> PurifyResult:
    """Round every mixed block to one of its supported atoms.

    Default is dual-greedy: the supported atom minimizing f + lam^T A_i g,
    lowest index on ties. With a seed, atoms are drawn with probability
    theta instead.
    """
    rng = np.random.default_rng(seed) if seed is not None else None
    imgs = p.block_images()
    choice = []
    for i, (f, t) in enumerate(zip(p.blocks, sol.theta)):
        supp = np.flatnonzero(t > 0)
        if supp.size == 1:
            choice.append(int(supp[0]))
        elif rng is not None:
            choice.append(int(rng.choice(supp, p=t[supp] / t[supp].sum())))
        else:
            score = f.values[supp] + imgs[i][supp] @ sol.dual_lambda
            best = np.flatnonzero(score <= score.min() + 1e-12 * (1 + abs(score.min())))
            choice.append(int(supp[best[0]]))
    x_hat = [f.grid[j] for f, j in zip(p.blocks, choice)]
    upper = float(sum(f.values[j] for f, j in zip(p.blocks, choice)))
    lhs = sum(img[j] for img, j in zip(imgs, choice)) if p.m else np.zeros(0)
    viol = np.maximum(lhs - p.b, 0.0) if p.m else np.zeros(0)
    feasible = bool(np.all(viol <= 1e-9 * (1 + np.abs(p.b)))) if p.m else True
    return PurifyResult(choice, x_hat, upper, feasible, viol, hull_value(p, sol.x_blocks))


def hull_value(p: SeparableProblem, x_blocks) -> float | None:
    """Objective with each 1-D block interpolated linearly between grid points."""
    if any(f.dim != 1 for f in p.blocks):
        return None
    return float(sum(float(f.interp(x[0])) for f, x in zip(p.blocks, x_blocks)))


def block_rhos(p: SeparableProblem) -> np.ndarray:
    return np.array([envelope.rho(f) for f in p.blocks])


def gap_bound_basic(p: SeparableProblem, sol: RelaxationSolution | None = None, m_override: int | None = None) -> float:
    """Sum of the (m~ + 1) largest block nonconvexities."""
    mt = m_override if m_override is not None else (sol.m_tilde if sol is not None else p.m)
    r = np.sort(block_rhos(p))[::-1]
    return float(r[: mt + 1].sum())


def rho_profiles(p: SeparableProblem, kmax: int) -> tuple[np.ndarray, list[int]]:
    """Rows (rho_1, ..., rho_kmax) per block; second value lists blocks that fell back to rho."""
    prof = np.zeros((p.n, kmax))
    fallback = []
    for i, f in enumerate(p.blocks):
        r = envelope.rho(f)
        for k in range(2, kmax + 1):
            try:
                prof[i, k - 1] = envelope.rho_k(f, k)
            except envelope.RhoBudgetExceeded:
                prof[i, k - 1:] = r
                fallback.append(i)
                break
        prof[i] = np.maximum.accumulate(prof[i])
    if fallback:
        warnings.warn(f"rho_k budget exceeded for blocks {fallback}; using rho instead", RhoFallbackWarning)
    return prof, fallback


def refined_from_profiles(profiles, budget: int) -> float:
    """max sum_i prof[i][beta_i - 1] over integers beta_i in [1, kmax] with sum beta_i = budget."""
    prof = np.asarray(profiles, dtype=float)
    n, kmax = prof.shape
    budget = int(min(max(budget, n), n * kmax))
    extra = budget - n  # distribute beta_i - 1
    NEG = -np.inf
    best = np.full(extra + 1, NEG)
    best[0] = 0.0
    for i in range(n):
        nxt = np.full(extra + 1, NEG)
        for k in range(kmax):
            if k > extra:
                break
            shifted = np.full(extra + 1, NEG)
            shifted[k:] = best[: extra + 1 - k] + prof[i, k]
            nxt = np.maximum(nxt, shifted)
        best = nxt
    return float(best[extra])


def gap_bound_refined(
    p: SeparableProblem, budget: int | None = None, sol: RelaxationSolution | None = None, m_override: int | None = None
) -> float:
    mt = m_override if m_override is not None else (sol.m_tilde if sol is not None else p.m)
    if budget is None:
        budget = p.n + mt + 1
    prof, _ = rho_profiles(p, mt + 2)
    return refined_from_profiles(prof, budget)


@dataclass
class GapCertificate:
    lower: float
    upper: float | None
    S: list[int]
    bound_basic: float
    bound_refined: float
    bound_basic_full_m: float
    m: int
    m_tilde: int
    purified_feasible: bool = False
    hull_upper: float | None = None
    bound_approx: float | None = None
    u1: float = 0.0
    u2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s: int | None = None
    s_used: int | None = None
    samples: int | None = None
    gamma: float | None = None
    R_v: float | None = None
    R_lambda: float | None = None
    M_V: float | None = None
    M_V_exact: bool = True
    u_bound: float | None = None
    bound_violated: bool = False
    attempts: int = 0
    x_bar: list[np.ndarray] | None = None

    def to_json(self) -> dict:
        out = {
            "lower": self.lower,
            "upper": self.upper,
            "hull_upper": self.hull_upper,
            "purified_feasible": self.purified_feasible,
            "S": self.S,
            "m": self.m,
            "m_tilde": self.m_tilde,
            "bound_basic": self.bound_basic,
            "bound_basic_full_m": self.bound_basic_full_m,
            "bound_refined": self.bound_refined,
        }
        if self.bound_approx is not None:
            out.update(
                {
                    "bound_approx": self.bound_approx,
                    "u1": self.u1,
                    "u2": self.u2.tolist(),
                    "s": self.s,
                    "s_used": self.s_used,
                    "samples": self.samples,
                    "gamma": self.gamma,
                    "R_v": self.R_v,
                    "R_lambda": self.R_lambda,
                    "M_V": self.M_V,
                    "M_V_exact": self.M_V_exact,
                    "u_bound": self.u_bound,
                    "bound_violated": self.bound_violated,
                    "attempts": self.attempts,
                }
            )
        return out


def certify(p: SeparableProblem, sol: RelaxationSolution | None = None) -> GapCertificate:
    sol = sol or solve_relaxation(p)
    pur = purify(sol, p)
    upper = pur.upper if pur.feasible else pur.hull_upper
    return GapCertificate(
        lower=sol.value,
        upper=upper,
        S=sol.mixed,
        bound_basic=gap_bound_basic(p, sol),
        bound_refined=gap_bound_refined(p, sol=sol),
        bound_basic_full_m=gap_bound_basic(p, m_override=p.m),
        m=p.m,
        m_tilde=sol.m_tilde,
        purified_feasible=pur.feasible,
        hull_upper=pur.hull_upper,
    )


def approx_budget(n: int, m_tilde: int, gamma: float, c: float) -> int:
    """s = n + 1 + 2 m~ c / (gamma^2 + c), rounded up and kept in [n, n + m~ + 1]."""
    s = n + 1 + 2 * m_tilde * c / (gamma**2 + c)
    return int(min(max(math.ceil(s - 1e-9), n), n + m_tilde + 1))


def gap_bound_approx(
    p: SeparableProblem,
    sol: RelaxationSolution | None = None,
    gamma: float = 1.0,
    seed=0,
    c: float | None = None,
    max_retries: int = 64,
) -> GapCertificate:
    """Certificate from a sampled conic representation of the relaxation optimum.

    Epigraph atoms z_ij = (f_ij; A_act,i g_ij) are used, with A_act the
    active rows. The LP vertex already has at most n + m~ nonzero weights,
    so at most m~ blocks are mixed. From the mixed weights, a uniform
    subset is kept so that the total support is about s. Each block is
    renormalized to a convex combination, giving a point x_bar that is
    feasible for the problem perturbed by u2 = A x_bar - A x*. The draw
    is repeated until max(|u1|, ||u2_act||) is within the theoretical bound.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    sol = sol or solve_relaxation(p)
    cert = certify(p, sol)
    mt = sol.m_tilde
    act = sol.active
    if c is None:
        c = default_c(mt + 1)
    n = p.n
    imgs = p.block_images()
    mixed = sol.mixed
    q = len(mixed)

    # mixed coefficients and their epigraph vectors
    blk, atom, lam, vecs = [], [], [], []
    for i in mixed:
        for j in np.flatnonzero(sol.theta[i] > 0):
            blk.append(i)
            atom.append(j)
            lam.append(sol.theta[i][j])
            vecs.append(np.concatenate([[p.blocks[i].values[j]], imgs[i][j, act]]))
    blk = np.array(blk, dtype=int)
    atom = np.array(atom, dtype=int)
    lam = np.array(lam)
    vecs = np.array(vecs).reshape(-1, mt + 1)
    N = lam.size
    if N:
        R_v = float(np.max(np.linalg.norm(vecs * lam[:, None], axis=1)))
        R_l = float(np.max(lam))
        per_block = [vecs[blk == i] for i in mixed]
        M_V, exact = mv_constant(per_block)
    else:
        R_v = R_l = M_V = 0.0
        exact = True
    u_bound = math.sqrt(2 * mt) * (R_v + R_l * M_V) * gamma

    s = approx_budget(n, mt, gamma, c)
    samples = int(min(max(s - (n - q), q), N))
    prof, _ = rho_profiles(p, mt + 2)
    rng = np.random.default_rng(seed)

    x_star = sol.x_star
    Ax_star = p.A @ x_star if p.m else np.zeros(0)
    best = None
    attempts = 0
    for attempts in range(1, max_retries + 1):
        J = np.sort(rng.choice(N, size=samples, replace=False)) if N else np.zeros(0, dtype=int)
        weights = []
        for i, t in enumerate(sol.theta):
            if i not in mixed:
                weights.append(t.copy())
                continue
            w = np.zeros_like(t)
            sel = J[blk[J] == i]
            if sel.size:
                w[atom[sel]] = lam[sel]
                w /= w.sum()
            else:
                w[int(np.argmax(t))] = 1.0
            weights.append(w)
        xb = [f.grid.T @ w for f, w in zip(p.blocks, weights)]
        rep_val = float(sum(f.values @ w for f, w in zip(p.blocks, weights)))
        u1 = rep_val - sol.value
        u2 = (p.A @ np.concatenate(xb) - Ax_star) if p.m else np.zeros(0)
        size = max(abs(u1), float(np.linalg.norm(u2[act]))) if mt else abs(u1)
        s_used = int(sum(np.count_nonzero(w) for w in weights))
        cand = (size, u1, u2, xb, s_used)
        if best is None or size < best[0]:
            best = cand
        if size <= u_bound * (1 + 1e-9) + 1e-12:
            break
    size, u1, u2, xb, s_used = best
    violated = size > u_bound * (1 + 1e-9) + 1e-12
    rho_term = refined_from_profiles(prof, max(s, s_used))
    cert.bound_approx = abs(u1) + rho_term
    cert.u1 = float(u1)
    cert.u2 = np.asarray(u2, dtype=float)
    cert.s = s
    cert.s_used = s_used
    cert.samples = samples
    cert.gamma = gamma
    cert.R_v, cert.R_lambda, cert.M_V, cert.M_V_exact = R_v, R_l, M_V, exact
    cert.u_bound = u_bound
    cert.bound_violated = violated
    cert.attempts = attempts
    cert.x_bar = xb
    return cert


def perturbed_value(p: SeparableProblem, u=None, which: str = "CoP", semantics: str = "grid", limit: int = ENUM_LIMIT) -> float:
    """Optimal value of the problem with right-hand side b + u (+inf if infeasible).

    ``which="CoP"`` solves the relaxation LP. ``which="P"`` with grid
    semantics enumerates every atom selection. With hull semantics each
    1-D block may take any value in its grid range, where its objective
    is the linear interpolation of the samples; that problem is solved
    exactly as a mixed-integer program.
    """
    u = np.zeros(p.m) if u is None else np.asarray(u, dtype=float).reshape(-1)
    if which == "CoP":
        c, C, b, E, _ = _lp_data(p, u)
        res = linprog(c, A_ub=C if p.m else None, b_ub=b if p.m else None, A_eq=E, b_eq=np.ones(p.n))
        return res.fun if res.ok else math.inf
    if which != "P":
        raise ValueError(f"unknown problem {which!r}")
    if semantics == "grid":
        return _enumerate_p(p, u, limit)
    if semantics == "hull":
        return _milp_hull(p, u)
    raise ValueError(f"unknown semantics {semantics!r}")


def _enumerate_p(p: SeparableProblem, u, limit: int) -> float:
    total = math.prod(len(f) for f in p.blocks)
    if total > limit:
        raise EnumerationBudgetExceeded(f"{total} selections exceed the enumeration limit {limit}")
    cost = np.zeros(1)
    lhs = np.zeros((1, p.m))
    for f, img in zip(p.blocks, p.block_images()):
        cost = (cost[:, None] + f.values[None, :]).reshape(-1)
        lhs = (lhs[:, None, :] + img[None, :, :]).reshape(-1, p.m)
    rhs = p.b + u
    ok = np.all(lhs <= rhs + 1e-9 * (1 + np.abs(rhs)), axis=1) if p.m else np.ones(cost.shape, dtype=bool)
    return float(cost[ok].min()) if ok.any() else math.inf


def _milp_hull(p: SeparableProblem, u) -> float:
    if any(f.dim != 1 for f in p.blocks):
        raise ValueError("hull semantics is implemented for 1-D blocks only")
    # variables: theta (all atoms) then one segment binary per consecutive atom pair
    sizes = [len(f) for f in p.blocks]
    nt = sum(sizes)
    nseg = sum(max(s - 1, 0) for s in sizes)
    nv = nt + nseg
    c = np.concatenate([np.concatenate([f.values for f in p.blocks]), np.zeros(nseg)])
    rows, lo, hi = [], [], []
    imgs = p.block_images()
    t0, s0 = 0, nt
    for f, s in zip(p.blocks, sizes):
        r = np.zeros(nv)
        r[t0:t0 + s] = 1.0
        rows.append(r), lo.append(1.0), hi.append(1.0)
        if s > 1:
            r = np.zeros(nv)
            r[s0:s0 + s - 1] = 1.0
            rows.append(r), lo.append(1.0), hi.append(1.0)
            for j in range(s):
                r = np.zeros(nv)
                r[t0 + j] = 1.0
                if j > 0:
                    r[s0 + j - 1] = -1.0
                if j < s - 1:
                    r[s0 + j] = -1.0
                rows.append(r), lo.append(-np.inf), hi.append(0.0)
        t0 += s
        s0 += max(s - 1, 0)
    for k in range(p.m):
        r = np.zeros(nv)
        r[:nt] = np.concatenate([img[:, k] for img in imgs])
        rows.append(r), lo.append(-np.inf), hi.append(p.b[k] + u[k])
    integrality = np.concatenate([np.zeros(nt), np.ones(nseg)])
    kw = dict(constraints=LinearConstraint(np.array(rows), lo, hi), integrality=integrality, bounds=Bounds(0.0, 1.0))
    res = milp(c, options={"mip_rel_gap": 1e-12}, **kw)
    if res.status == 2:
        # presolve occasionally reports infeasibility on tight rows; confirm without it
        res = milp(c, options={"mip_rel_gap": 1e-12, "presolve": False}, **kw)
    if res.status == 2:
        return math.inf
    if res.status != 0:
        raise RuntimeError(f"MILP failed: {res.message}")
    return float(res.fun)


@dataclass
class NonlinearGap:
    objective_gap: float
    constraint_shift: np.ndarray


def gap_bound_nonlinear(rho_f_bar: float, rho_g_bar: float, m: int) -> NonlinearGap:
    """(m+1) rho_f_bar on the objective and a uniform (m+1) rho_g_bar constraint shift."""
    if rho_f_bar < 0 or rho_g_bar < 0 or m < 0:
        raise ValueError("inputs must be nonnegative")
    return NonlinearGap((m + 1) * rho_f_bar, np.full(m, (m + 1) * rho_g_bar))
