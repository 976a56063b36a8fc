"""Tail bounds for sampling without replacement, the sigma_m variance proxy,
and the approximate-Helly constraint-sampling bound with its LP harness.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .caratheodory import L2, NormSpec


@dataclass
class TailBoundParams:
    N: int
    m: int
    epsilon: float
    delta0: float = 0.05
    R_v: float = 0.0
    R_lambda: float = 0.0
    D_smooth: float = 1.0
    sigma_m: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not 1 <= self.m <= self.N:
            raise ValueError(f"need 1 <= m <= N, got m={self.m}, N={self.N}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")
        if min(self.R_v, self.R_lambda, self.sigma_m) < 0 or self.D_smooth < 1:
            raise ValueError("radii and sigma must be nonnegative, D >= 1")

    @property
    def alpha_m(self) -> float:
        return (self.m - 1) / self.N


def _clamp01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


def hoeffding_serfling_tail(p: TailBoundParams) -> float:
    """2 exp(-alpha eps^2 / (2 N (1 - alpha) R^2)) with R = max(R_v, R_lambda)."""
    R = max(p.R_v, p.R_lambda)
    a = p.alpha_m
    if R == 0:
        return 0.0 if p.epsilon > 0 else 1.0
    if a == 0:
        return 1.0
    return _clamp01(2.0 * math.exp(-a * p.epsilon**2 / (2.0 * p.N * (1.0 - a) * R**2)))


def bennett_serfling_tail(p: TailBoundParams) -> float:
    """2 exp(-m eps^2 / (2 (2 D^2 ((N-m)/N) sigma_m^2 + eps R_v / 3)))."""
    denom = 2.0 * (2.0 * p.D_smooth**2 * ((p.N - p.m) / p.N) * p.sigma_m**2 + p.epsilon * p.R_v / 3.0)
    if denom == 0:
        return 0.0 if p.epsilon > 0 else 1.0
    return _clamp01(2.0 * math.exp(-p.m * p.epsilon**2 / denom))


@dataclass
class RatioResult:
    ratio: float
    raw: float
    attainable: bool
    m: int


def required_sampling_ratio(p: TailBoundParams) -> RatioResult:
    """Smallest sampling ratio making the Bennett-Serfling tail at most delta0.

    Uses sigma_m in both numerator and denominator. ``raw`` is the formula
    before clamping to (0, 1]; when it exceeds one no sample size suffices.
    """
    L = 2.0 * math.log(2.0 / p.delta0)
    v = 2.0 * (p.D_smooth * p.sigma_m) ** 2
    num = L * (v + p.epsilon * p.R_v / 3.0) / p.N
    den = p.epsilon**2 + L * v / p.N
    raw = num / den if den > 0 else math.inf
    ratio = min(1.0, max(raw, 1.0 / p.N if raw > 0 else 0.0))
    m = min(p.N, max(1, math.ceil(ratio * p.N - 1e-9)))
    return RatioResult(ratio if ratio > 0 else 1.0 / p.N, raw, raw <= 1.0, m)


def _as_population(population) -> np.ndarray:
    pop = np.asarray(population, dtype=float)
    if pop.ndim == 1:
        pop = pop.reshape(-1, 1)
    if pop.ndim != 2 or pop.shape[0] < 2:
        raise ValueError("population needs at least two members")
    return pop


def _set_variance(pop: np.ndarray, norm: NormSpec) -> float:
    centered = pop - pop.mean(axis=0)
    return float(np.mean(norm(centered, axis=1) ** 2))


def centered_radius(population, norm: NormSpec = L2) -> float:
    pop = _as_population(population)
    return float(np.max(norm(pop - pop.mean(axis=0), axis=1)))


@dataclass
class SigmaResult:
    value: float
    mode: str
    lower_estimate: bool = False


def sigma_m(population, m: int, norm: NormSpec = L2, mode: str = "exact", trials: int = 10_000, seed=0) -> SigmaResult:
    """Variance proxy for sampling without replacement.

    sigma_m^2 is the sup over sampling histories of the weighted average,
    with weights (N-k)^-2 for k = 1..m, of the conditional variances of the
    k-th draw. Modes:
      exact        dynamic program over removed subsets (N <= 10)
      monte_carlo  max over random histories (a lower estimate)
      upper        per-k maximum of the conditional variance (an upper bound;
                   exact per k for scalar populations)
    """
    pop = _as_population(population)
    N = pop.shape[0]
    if not 1 <= m <= N - 1:
        raise ValueError(f"need 1 <= m <= N-1, got m={m}, N={N}")
    w = 1.0 / (N - np.arange(1, m + 1)) ** 2
    W = w.sum()
    if mode == "exact":
        if N > 10:
            raise ValueError("exact mode is limited to N <= 10")
        return SigmaResult(math.sqrt(_sigma_exact(pop, m, w, norm) / W), mode)
    if mode == "monte_carlo":
        return SigmaResult(math.sqrt(_sigma_mc(pop, m, w, norm, trials, seed) / W), mode, lower_estimate=True)
    if mode == "upper":
        per_k = [_max_subset_variance(pop, N - k + 1, norm) for k in range(1, m + 1)]
        return SigmaResult(math.sqrt(float(np.dot(w, per_k)) / W), mode)
    raise ValueError(f"unknown mode {mode!r}")


def _sigma_exact(pop, m, w, norm) -> float:
    N = pop.shape[0]
    # best[mask] = max over orderings of the removed set `mask` of the
    # accumulated weighted variances of the draws made so far
    full = (1 << N) - 1
    var_cache: dict[int, float] = {}

    def var_of_remaining(mask: int) -> float:
        if mask not in var_cache:
            idx = [i for i in range(N) if not (mask >> i) & 1]
            var_cache[mask] = _set_variance(pop[idx], norm)
        return var_cache[mask]

    best = {0: 0.0}
    for k in range(1, m + 1):
        nxt: dict[int, float] = {}
        for mask, val in best.items():
            gain = w[k - 1] * var_of_remaining(mask)
            for i in range(N):
                if not (mask >> i) & 1:
                    nm = mask | (1 << i)
                    if nm != full and nxt.get(nm, -1.0) < val + gain:
                        nxt[nm] = val + gain
                    elif nm == full:
                        nxt[nm] = max(nxt.get(nm, -1.0), val + gain)
        best = nxt
    return max(best.values())


def _sigma_mc(pop, m, w, norm, trials, seed) -> float:
    rng = np.random.default_rng(seed)
    N = pop.shape[0]
    best = 0.0
    if norm.kind == "l2":
        sq = np.sum(pop**2, axis=1)
        tot, totsq = pop.sum(axis=0), sq.sum()
        chunk = 4096
        for start in range(0, trials, chunk):
            t = min(chunk, trials - start)
            perm = np.argsort(rng.random((t, N)), axis=1)[:, : m - 1]
            rem_sum = np.broadcast_to(tot, (t, pop.shape[1])).copy()
            rem_sq = np.full(t, totsq)
            acc = np.zeros(t)
            for k in range(1, m + 1):
                cnt = N - k + 1
                mean = rem_sum / cnt
                acc += w[k - 1] * (rem_sq / cnt - np.sum(mean**2, axis=1))
                if k <= m - 1:
                    drawn = perm[:, k - 1]
                    rem_sum -= pop[drawn]
                    rem_sq -= sq[drawn]
            best = max(best, float(acc.max()))
        return best
    for _ in range(trials):
        order = rng.permutation(N)
        acc = sum(w[k - 1] * _set_variance(pop[order[k - 1:]], norm) for k in range(1, m + 1))
        best = max(best, acc)
    return best


def _max_subset_variance(pop: np.ndarray, size: int, norm: NormSpec) -> float:
    if size <= 1:
        return 0.0
    if size == pop.shape[0]:
        return _set_variance(pop, norm)
    if pop.shape[1] == 1:
        # the max-variance subset of fixed size is the i smallest plus the
        # (size - i) largest values
        v = np.sort(pop[:, 0])
        N = v.size
        c1 = np.concatenate([[0.0], np.cumsum(v)])
        c2 = np.concatenate([[0.0], np.cumsum(v**2)])
        best = 0.0
        for i in range(size + 1):
            j = size - i
            s = c1[i] + (c1[N] - c1[N - j])
            s2 = c2[i] + (c2[N] - c2[N - j])
            best = max(best, s2 / size - (s / size) ** 2)
        return float(max(best, 0.0))
    # any subset's variance is at most its mean squared distance to the
    # population mean, which is at most the largest such distance
    return float(np.max(norm(pop - pop.mean(axis=0), axis=1) ** 2))


def empirical_tail(population, m: int, epsilon: float, norm: NormSpec = L2, trials: int = 10_000, seed=0) -> float:
    """Frequency of ||sample mean - population mean|| >= epsilon over seeded draws."""
    pop = _as_population(population)
    N = pop.shape[0]
    if not 1 <= m <= N:
        raise ValueError("need 1 <= m <= N")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    mean = pop.mean(axis=0)
    hits = 0
    chunk = max(1, 2_000_000 // max(N, 1))
    tol = 1e-12 * (1.0 + float(np.max(np.abs(pop))))
    for start in range(0, trials, chunk):
        t = min(chunk, trials - start)
        idx = np.argsort(rng.random((t, N)), axis=1)[:, :m]
        dev = norm(pop[idx].mean(axis=1) - mean, axis=1)
        # deviations at rounding level count as exact means
        dev = np.where(dev <= tol, 0.0, dev)
        hits += int(np.count_nonzero(dev >= epsilon)) if epsilon > 0 else t
    return hits / trials


def helly_point_distance(alpha: float, n: int, k: int, d: int) -> float:
    """alpha sqrt((m-k)/(k(m-1))) with m = min(n, d+1); zero once k >= m."""
    if not 0 < k <= n:
        raise ValueError("need 0 < k <= n")
    m = min(n, d + 1)
    if k >= m:
        return 0.0
    return alpha * math.sqrt((m - k) / (k * (m - 1)))


@dataclass
class HellyParams:
    n_constraints: int
    k: int
    d: int
    D_diam: float
    L0: float
    L: np.ndarray
    lam: np.ndarray
    m_override: int | None = None

    @property
    def m(self) -> int:
        return self.m_override if self.m_override is not None else min(self.n_constraints, self.d + 1)


@dataclass
class SamplingBound:
    value: float
    vacuous: bool = False
    factor: float = 0.0


def constraint_sampling_bound(h: HellyParams) -> SamplingBound:
    """(L0 + sum lam_i L_i) (D/2) sqrt((m-k)/(k(m-1)))."""
    m = h.m
    if h.k >= m:
        factor = 0.0
    else:
        factor = math.sqrt((m - h.k) / (h.k * (m - 1)))
    if not math.isfinite(h.D_diam):
        return SamplingBound(math.inf, vacuous=True, factor=factor)
    lip = h.L0 + float(np.dot(h.lam, h.L))
    return SamplingBound(lip * h.D_diam / 2.0 * factor, factor=factor)


@dataclass
class DistanceProgram:
    """minimize ||x - center||_2 subject to a_i^T x <= b_i.

    The objective is 1-Lipschitz and every level set is a ball, so the
    diameter term of the sampling bound is finite.
    """

    A: np.ndarray
    b: np.ndarray
    center: np.ndarray
    _cands: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.center = np.asarray(self.center, dtype=float)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "center": self.center.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "DistanceProgram":
        return cls(obj["A"], obj["b"], obj["center"])

    def candidates(self):
        """Projections of the center onto every face spanned by <= d rows.

        Returns (points, distances, feasibility matrix, lookup), where the
        lookup maps a sorted tuple of row indices to its candidate row.
        """
        if self._cands:
            return self._cands["pts"], self._cands["dist"], self._cands["feas"], self._cands["lookup"]
        pts, lookup = [self.center.copy()], {(): 0}
        c = self.center
        for s in range(1, self.d + 1):
            for S in itertools.combinations(range(self.n), s):
                As = self.A[list(S)]
                G = As @ As.T
                if abs(np.linalg.det(G)) < 1e-12:
                    continue
                mu = np.linalg.solve(G, As @ c - self.b[list(S)])
                lookup[S] = len(pts)
                pts.append(c - As.T @ mu)
        pts = np.array(pts)
        dist = np.linalg.norm(pts - c, axis=1)
        feas = pts @ self.A.T <= self.b + 1e-9 * (1 + np.abs(self.b))
        self._cands.update(pts=pts, dist=dist, feas=feas, lookup=lookup)
        return pts, dist, feas, lookup

    def solve(self, J=None) -> tuple[float, np.ndarray]:
        """Exact projection of the center onto {a_j^T x <= b_j, j in J}.

        The projection is the closest feasible candidate, since it is the
        projection onto its own active face.
        """
        pts, dist, feas, lookup = self.candidates()
        J = tuple(range(self.n)) if J is None else tuple(sorted(J))
        best, arg = math.inf, -1
        for s in range(0, min(len(J), self.d) + 1):
            for S in itertools.combinations(J, s):
                k = lookup.get(S)
                if k is not None and dist[k] < best and feas[k, list(J)].all():
                    best, arg = dist[k], k
        return best, pts[arg]

    def multipliers(self) -> tuple[float, np.ndarray, np.ndarray]:
        """(optimal value, x*, lambda) for the full program."""
        r, x = self.solve()
        lam = np.zeros(self.n)
        if r <= 1e-12:
            return r, x, lam
        act = np.flatnonzero(np.abs(self.A @ x - self.b) <= 1e-9 * (1 + np.abs(self.b)))
        if act.size:
            # (x - c)/r + sum lam_i a_i = 0
            sol, *_ = np.linalg.lstsq(self.A[act].T, -(x - self.center) / r, rcond=None)
            lam[act] = np.maximum(sol, 0.0)
        return r, x, lam

    def subset_values(self, k: int) -> np.ndarray:
        """Optimal value for every k-subset of constraints (vectorized)."""
        pts, dist, feas, lookup = self.candidates()
        n = self.n
        tables = {}
        for S, idx in lookup.items():
            s = len(S)
            if s not in tables:
                tables[s] = np.full((n,) * s, -1, dtype=np.int64) if s else np.array(-1)
            tables[s][S] = idx
        subsets = np.array(list(itertools.combinations(range(n), k)), dtype=int)
        best = np.full(subsets.shape[0], np.inf)
        for s in range(0, min(k, self.d) + 1):
            if s not in tables:
                continue
            for pos in itertools.combinations(range(k), s):
                cand = tables[s][tuple(subsets[:, p] for p in pos)] if s else np.zeros(len(subsets), dtype=np.int64)
                ok = cand >= 0
                cidx = np.where(ok, cand, 0)
                ok &= feas[cidx[:, None], subsets].all(axis=1)
                best = np.where(ok & (dist[cidx] < best), dist[cidx], best)
        return best

    def helly_params(self, k: int, m_override: int | None = None) -> HellyParams:
        r, _, lam = self.multipliers()
        return HellyParams(self.n, k, self.d, 2.0 * r, 1.0, np.linalg.norm(self.A, axis=1), lam, m_override)


def random_distance_program(rng: np.random.Generator, n: int = 40, d: int = 3) -> DistanceProgram:
    """Random polyhedron around the origin with the center placed outside it."""
    A = rng.normal(size=(n, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = rng.uniform(0.5, 1.5, size=n)
    direction = rng.normal(size=d)
    center = 3.0 * direction / np.linalg.norm(direction)
    return DistanceProgram(A, b, center)


@dataclass
class SamplingReport:
    k: int
    subsets: int
    optimum: float
    max_slack: float
    min_slack: float
    bound: float
    vacuous: bool
    holds_worst_case: bool
    holds_some_subset: bool
    unbounded: int = 0

    def to_row(self) -> dict:
        return {
            "k": self.k,
            "subsets": self.subsets,
            "optimum": self.optimum,
            "max_slack": self.max_slack,
            "min_slack": self.min_slack,
            "bound": self.bound,
            "worst_case_ok": int(self.holds_worst_case),
            "some_subset_ok": int(self.holds_some_subset),
        }


def _report(prog: DistanceProgram, k: int, vals: np.ndarray, m_override=None) -> SamplingReport:
    r = prog.solve()[0]
    bound = constraint_sampling_bound(prog.helly_params(k, m_override))
    slack = r - vals
    unb = int(np.count_nonzero(~np.isfinite(vals)))
    tol = 1e-9 * (1 + r)
    return SamplingReport(
        k=k,
        subsets=int(vals.size),
        optimum=r,
        max_slack=float(slack.max()),
        min_slack=float(slack.min()),
        bound=bound.value,
        vacuous=bound.vacuous,
        holds_worst_case=bool(slack.max() <= bound.value + tol),
        holds_some_subset=bool(slack.min() <= bound.value + tol),
        unbounded=unb,
    )


def exhaustive_constraint_sampling(prog: DistanceProgram, k: int, m_override=None) -> SamplingReport:
    return _report(prog, k, prog.subset_values(k), m_override)


def constraint_sampling_experiment(prog: DistanceProgram, k: int, trials: int = 500, seed=0, m_override=None) -> SamplingReport:
    rng = np.random.default_rng(seed)
    vals = np.array([prog.solve(rng.choice(prog.n, size=k, replace=False))[0] for _ in range(trials)])
    return _report(prog, k, vals, m_override)


@dataclass
class ConcentrationReport:
    N: int
    m: int
    epsilon: float
    sigma_m: float
    sigma_mode: str
    bound_hs: float
    bound_bs: float
    empirical: float
    trials: int

    @property
    def std_error(self) -> float:
        p = self.empirical
        return math.sqrt(max(p * (1 - p), 1.0 / self.trials) / self.trials)

    def to_row(self) -> dict:
        return {
            "N": self.N,
            "m": self.m,
            "epsilon": self.epsilon,
            "bound_hs": self.bound_hs,
            "bound_bs": self.bound_bs,
            "empirical": self.empirical,
            "sigma_m": self.sigma_m,
        }


def population_params(population, m: int, epsilon: float, norm: NormSpec = L2, sigma_mode: str | None = None,
                      delta0: float = 0.05, trials: int = 10_000, seed=0) -> TailBoundParams:
    """Tail parameters for the deviation of a size-m sample mean from the population mean.

    The summands are v_j / N, so R_v = R_lambda = max ||v_j - mean|| / N for
    the Hoeffding-Serfling form, while the Bennett-Serfling form is stated
    directly on the sample mean with R_v = max ||v_j - mean||.
    """
    pop = _as_population(population)
    N = pop.shape[0]
    if sigma_mode is None:
        sigma_mode = "exact" if N <= 10 else "upper"
    sig = 0.0 if m >= N else sigma_m(pop, m, norm, sigma_mode, trials=trials, seed=seed).value
    R = centered_radius(pop, norm)
    return TailBoundParams(N=N, m=m, epsilon=epsilon, delta0=delta0, R_v=R, R_lambda=R,
                           D_smooth=max(1.0, norm.smoothness_D), sigma_m=sig)


def concentration_report(population, m: int, epsilon: float, norm: NormSpec = L2, trials: int = 10_000,
                         seed=0, sigma_mode: str | None = None) -> ConcentrationReport:
    pop = _as_population(population)
    p = population_params(pop, m, epsilon, norm, sigma_mode, trials=trials, seed=seed)
    N = p.N
    hs = TailBoundParams(N=N, m=m, epsilon=epsilon, R_v=p.R_v / N, R_lambda=p.R_v / N)
    mode = sigma_mode or ("exact" if N <= 10 else "upper")
    return ConcentrationReport(N, m, epsilon, p.sigma_m, mode, hoeffding_serfling_tail(hs),
                               bennett_serfling_tail(p), empirical_tail(pop, m, epsilon, norm, trials, seed), trials)
