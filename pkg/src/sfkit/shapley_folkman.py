"""Exact and sampled Shapley-Folkman decompositions."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .caratheodory import L2, NormSpec, default_c, reduce_conic, sample_size
from .geometry import DimensionMismatch, PointSet

DEDUP_TOL = 1e-12
M_V_ENUM_LIMIT = 200_000


@dataclass
class BlockFamily:
    blocks: list[PointSet]
    weights: list[np.ndarray]

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("a family needs at least one block")
        if len(self.weights) != len(self.blocks):
            raise ValueError("one weight vector per block is required")
        d = self.blocks[0].dim
        ws = []
        for i, (V, w) in enumerate(zip(self.blocks, self.weights)):
            if V.dim != d:
                raise DimensionMismatch(f"block {i} has dim {V.dim}, expected {d}")
            w = np.asarray(w, dtype=float).reshape(-1)
            if w.shape[0] != len(V):
                raise ValueError(f"block {i}: {len(V)} points but {w.shape[0]} weights")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"block {i}: weights must lie on the simplex")
            ws.append(w)
        self.weights = ws

    @property
    def dim(self) -> int:
        return self.blocks[0].dim

    @property
    def n(self) -> int:
        return len(self.blocks)

    def point(self) -> np.ndarray:
        return sum(V.points.T @ w for V, w in zip(self.blocks, self.weights))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "blocks": [{"points": V.points.tolist(), "weights": w.tolist()} for V, w in zip(self.blocks, self.weights)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BlockFamily":
        blocks, weights = [], []
        for i, b in enumerate(obj["blocks"]):
            blocks.append(PointSet(b["points"], label=str(b.get("label", i))))
            w = b.get("weights")
            weights.append(np.full(len(blocks[-1]), 1.0 / len(blocks[-1])) if w is None else np.asarray(w, float))
        fam = cls(blocks, weights)
        if "dim" in obj and int(obj["dim"]) != fam.dim:
            raise DimensionMismatch(f"declared dim {obj['dim']} but blocks have dim {fam.dim}")
        return fam


@dataclass
class SFDecomposition:
    extremal: dict[int, int]
    S: list[int]
    combos: dict[int, tuple[np.ndarray, np.ndarray]]  # i -> (atom indices, weights)
    x: np.ndarray
    x_reconstructed: np.ndarray
    error: float

    def to_json(self) -> dict:
        return {
            "extremal": {str(i): int(j) for i, j in sorted(self.extremal.items())},
            "S": [int(i) for i in self.S],
            "combos": {str(i): {"indices": idx.tolist(), "weights": w.tolist()} for i, (idx, w) in sorted(self.combos.items())},
            "x": self.x.tolist(),
            "error": self.error,
        }


def _merge_duplicates(V: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fold weights of repeated atoms onto the first copy. Returns (kept indices, weights)."""
    k = V.shape[0]
    if k <= 1:
        return np.arange(k), w.copy()
    scale = max(1.0, float(np.max(np.abs(V))))
    key = np.round(V / (DEDUP_TOL * scale))
    if k <= 32:
        # small blocks: pairwise comparison beats sorting rows
        same = np.all(key[:, None, :] == key[None, :, :], axis=2)
        first = np.argmax(same, axis=1)  # lowest index of each row's class
        if np.all(first == np.arange(k)):
            return np.arange(k), w.copy()
        keep = np.flatnonzero(first == np.arange(k))
        merged = np.zeros(k)
        np.add.at(merged, first, w)
        return keep, merged[keep]
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    merged = np.zeros(first.shape[0])
    np.add.at(merged, inverse.reshape(-1), w)
    order = np.argsort(first)
    return first[order], merged[order]


def _lifted_reduce(family: BlockFamily, beta: float = 1.0, gamma: float = 1.0):
    """Run the conic reduction on the lifted atoms (beta v_ij; gamma e_i).

    Returns per-block (atom indices, weights) for every block.
    """
    n = family.n
    reps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    lift_blocks, lift_idx, lift_w, lift_cols = [], [], [], []
    for i, (V, w) in enumerate(zip(family.blocks, family.weights)):
        idx, mw = _merge_duplicates(V.points, w)
        nz = mw > 0
        idx, mw = idx[nz], mw[nz]
        if idx.size == 1 or np.any(mw >= 1.0):
            j = idx[int(np.argmax(mw))]
            reps[i] = (np.array([j]), np.array([1.0]))
            continue
        lift_blocks.append(np.full(idx.size, i))
        lift_idx.append(idx)
        lift_w.append(mw)
        lift_cols.append(V.points[idx])
    if lift_blocks:
        blk = np.concatenate(lift_blocks)
        mixed = np.unique(blk)
        pos = {b: k for k, b in enumerate(mixed)}
        upper = beta * np.vstack(lift_cols).T
        lower = np.zeros((mixed.size, blk.size))
        lower[[pos[b] for b in blk], np.arange(blk.size)] = gamma
        red = reduce_conic(np.vstack([upper, lower]), np.concatenate(lift_w))
        aidx = np.concatenate(lift_idx)
        for b in mixed:
            sel = blk[red.atom_indices] == b
            js = aidx[red.atom_indices[sel]]
            ws = red.weights[sel]
            if js.size == 1:
                ws = np.array([1.0])
            else:
                ws = ws / ws.sum()
            reps[int(b)] = (js, ws)
    return [reps[i] for i in range(n)]


def _assemble(family: BlockFamily, reps) -> SFDecomposition:
    x = family.point()
    extremal, S, combos = {}, [], {}
    rec = np.zeros(family.dim)
    for i, (js, ws) in enumerate(reps):
        rec = rec + family.blocks[i].points[js].T @ ws
        if js.size == 1:
            extremal[i] = int(js[0])
        else:
            S.append(i)
            combos[i] = (js, ws)
    return SFDecomposition(extremal, S, combos, x, rec, float(np.linalg.norm(rec - x)))


def sf_decompose(family: BlockFamily) -> SFDecomposition:
    """Rewrite the family's point using true atoms in all but at most d blocks."""
    return _assemble(family, _lifted_reduce(family))


@dataclass
class ApproxSFResult:
    x: np.ndarray
    x_hat: np.ndarray
    mu: dict[int, float]
    S: list[int]
    T: list[int]
    q: int
    m: int
    x_error: float
    mu_sum_error: float
    mu_l2_error: float
    epsilon: float
    beta: float
    gamma: float
    norm: NormSpec
    attempts: int = 1
    bound_violated: bool = False
    picks: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    extremal: dict[int, int] = field(default_factory=dict)
    S_bound_strong: float = 0.0

    @property
    def bounds(self) -> tuple[float, float, float]:
        q, e = self.q, self.epsilon
        return q * e / self.beta, q * e, q * e / self.gamma

    def within_bounds(self, slack: float = 1e-12) -> bool:
        bx, bs, bl = self.bounds
        return self.x_error <= bx + slack and self.mu_sum_error <= bs + slack and self.mu_l2_error <= bl + slack

    def to_json(self) -> dict:
        bx, bs, bl = self.bounds
        return {
            "x_hat": self.x_hat.tolist(),
            "mu": {str(i): v for i, v in sorted(self.mu.items())},
            "S": self.S,
            "T": self.T,
            "q": self.q,
            "m": self.m,
            "errors": {"x": self.x_error, "mu_sum": self.mu_sum_error, "mu_l2": self.mu_l2_error},
            "bounds": {"x": bx, "mu_sum": bs, "mu_l2": bl},
            "params": {"epsilon": self.epsilon, "beta": self.beta, "gamma": self.gamma, "norm": self.norm.kind},
            "attempts": self.attempts,
            "bound_violated": self.bound_violated,
        }


@dataclass
class MixedCoefficients:
    """Flattened nonzero coefficients of the mixed blocks of an exact decomposition."""

    block: np.ndarray
    atom: np.ndarray
    lam: np.ndarray
    vec: np.ndarray  # rows: atoms v_ij
    mixed: list[int]

    @property
    def N(self) -> int:
        return int(self.lam.shape[0])


def mixed_coefficients(family: BlockFamily, dec: SFDecomposition) -> MixedCoefficients:
    block, atom, lam = [], [], []
    for i in dec.S:
        js, ws = dec.combos[i]
        block.extend([i] * js.size)
        atom.extend(js.tolist())
        lam.extend(ws.tolist())
    block = np.array(block, dtype=int)
    atom = np.array(atom, dtype=int)
    vec = np.array([family.blocks[b].points[a] for b, a in zip(block, atom)]).reshape(-1, family.dim)
    return MixedCoefficients(block, atom, np.array(lam, dtype=float), vec, list(dec.S))


def radii(coef: MixedCoefficients, norm: NormSpec = L2) -> tuple[float, float]:
    """(R_v, R_lambda) over the coefficients that are not equal to one."""
    keep = coef.lam != 1.0
    if not keep.any():
        return 0.0, 0.0
    R_v = float(np.max(norm(coef.vec[keep] * coef.lam[keep, None], axis=1)))
    return R_v, float(np.max(coef.lam[keep]))


def draw_mixed(coef: MixedCoefficients, m: int, rng: np.random.Generator):
    """Uniform subset of m mixed coefficients with rescaled weights (N/m) lambda_ij.

    This is the sampled representation of y/q scaled back by q, so the
    weights of block i add up to mu_i.
    """
    J = np.sort(rng.choice(coef.N, size=m, replace=False))
    return J, (coef.N / m) * coef.lam[J]


def approx_sf_decompose(
    family: BlockFamily,
    epsilon: float,
    beta: float | None = None,
    gamma: float | None = None,
    norm: NormSpec = L2,
    seed=0,
    c: float | None = None,
    m: int | None = None,
    max_retries: int = 64,
) -> ApproxSFResult:
    """Sampled Shapley-Folkman representation.

    The exact decomposition fixes the mixed blocks I (q = |I| <= d). A
    uniform subset of the mixed coefficients is kept and rescaled, once
    sized for radius R/q with R = max(beta D R_v, gamma R_lambda). Draws are
    repeated until all three error bounds hold; otherwise the best draw is
    returned flagged ``bound_violated``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = family.dim
    dec = _assemble(family, _lifted_reduce(family))
    x = dec.x
    q = len(dec.S)
    if q == 0:
        return ApproxSFResult(x, dec.x_reconstructed, {}, [], [], 0, 0, dec.error, 0.0, 0.0, epsilon,
                              beta or 1.0, gamma or 1.0, norm, extremal=dict(dec.extremal))
    coef = mixed_coefficients(family, dec)
    R_v, R_l = radii(coef, norm)
    D = norm.smoothness_D
    if gamma is None:
        gamma = q / math.sqrt(d + q)
    if beta is None:
        beta = gamma * R_l / (D * R_v) if R_v > 0 else 1.0
    if beta <= 0 or gamma <= 0:
        raise ValueError("beta and gamma must be positive")
    R = max(beta * D * R_v, gamma * R_l)
    if m is None:
        coef_c = c if c is not None else default_c(d + q)
        m = sample_size(coef.N, epsilon, R / q, coef_c) if R > 0 else coef.N
    m = int(min(max(m, 1), coef.N))

    base = np.zeros(d)
    for i, j in dec.extremal.items():
        base = base + family.blocks[i].points[j]

    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(1, max_retries + 1):
        J, mu_ij = draw_mixed(coef, m, rng)
        res = _approx_result(family, dec, coef, J, mu_ij, base, q, m, epsilon, beta, gamma, norm)
        res.attempts = attempt
        if res.within_bounds():
            return res
        if best is None or _excess(res) < _excess(best):
            best = res
    best.bound_violated = True
    best.attempts = max_retries
    return best


def _excess(r: ApproxSFResult) -> float:
    bx, bs, bl = r.bounds
    return max(r.x_error - bx, r.mu_sum_error - bs, r.mu_l2_error - bl)


def _approx_result(family, dec, coef, J, mu_ij, base, q, m, epsilon, beta, gamma, norm) -> ApproxSFResult:
    x_hat = base + coef.vec[J].T @ mu_ij
    mu, picks, S, T = {}, {}, [], []
    for i in coef.mixed:
        sel = coef.block[J] == i
        mu[i] = float(mu_ij[sel].sum())
        js = coef.atom[J][sel]
        w = mu_ij[sel]
        picks[i] = (js, w)
        (S if js.size >= 2 else T).append(i)
    dev = np.array([mu[i] - 1.0 for i in coef.mixed])
    res = ApproxSFResult(
        x=dec.x,
        x_hat=x_hat,
        mu=mu,
        S=S,
        T=T,
        q=q,
        m=m,
        x_error=float(norm(dec.x - x_hat)),
        mu_sum_error=abs(float(sum(mu.values())) - q),
        mu_l2_error=float(np.linalg.norm(dev)),
        epsilon=epsilon,
        beta=beta,
        gamma=gamma,
        norm=norm,
        picks=picks,
        extremal=dict(dec.extremal),
    )
    res.S_bound_strong = (m - len(T)) / 2.0
    return res


def membership_residual(family: BlockFamily, res: ApproxSFResult) -> float:
    """Distance between x_hat and the point rebuilt block by block from its certificate."""
    rec = np.zeros(family.dim)
    for i, j in res.extremal.items():
        rec = rec + family.blocks[i].points[j]
    for i, (js, w) in res.picks.items():
        mu = res.mu[i]
        if js.size:
            # mu_i times a point of Co(V_i) (or of V_i for a single atom)
            inner = w / w.sum()
            rec = rec + mu * (family.blocks[i].points[js].T @ inner)
    return float(np.linalg.norm(rec - res.x_hat))


def mv_constant(blocks: list[np.ndarray], limit: int = M_V_ENUM_LIMIT) -> tuple[float, bool]:
    """sup over ||u||_2 <= 1 and v_i in V_i of ||sum_i u_i v_i||_2.

    For a fixed choice of atoms this is the spectral norm of the matrix with
    columns v_i, so the sup is a max over atom choices. Exact enumeration
    when the number of choices is at most ``limit``; otherwise the Frobenius
    bound sqrt(sum_i max ||v||^2) is returned. The flag tells which.
    """
    if not blocks:
        return 0.0, True
    total = math.prod(b.shape[0] for b in blocks)
    if total > limit:
        return float(math.sqrt(sum(float(np.max(np.sum(b**2, axis=1))) for b in blocks))), False
    best = 0.0
    for choice in itertools.product(*[range(b.shape[0]) for b in blocks]):
        M = np.array([b[c] for b, c in zip(blocks, choice)])
        best = max(best, float(np.linalg.norm(M, 2)))
    return best, True


@dataclass
class CorollaryBound:
    m: int
    s_bound: int
    x_error_bound: float


def corollary_error_bound(
    R_v: float, R_lambda: float, M_V: float, d: int, epsilon: float, c: float | None = None, D: float = 1.0
) -> CorollaryBound:
    """m = ceil(1 + 2d t/(1+t)) with t = c (D R_lambda/eps)^2, |S| <= m - d, error sqrt(2d)(R_v/R_lambda + M_V) eps."""
    if min(R_v, R_lambda, epsilon) <= 0 or M_V < 0 or d < 1:
        raise ValueError("corollary inputs must be positive")
    if c is None:
        c = default_c(d)
    t = c * (D * R_lambda / epsilon) ** 2
    m_real = 1.0 + 2 * d * t / (1.0 + t) if math.isfinite(t) else 1.0 + 2 * d
    m = math.ceil(m_real - 1e-9)
    s_bound = min(max(m - d, 0), d)
    return CorollaryBound(m, s_bound, math.sqrt(2 * d) * (R_v / R_lambda + M_V) * epsilon)
