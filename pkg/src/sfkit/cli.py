"""Command-line entry point: ``sfkit <subcommand>``.

Every run writes its outputs plus ``manifest.json`` into ``--out``. Exit
codes: 0 all checks passed, 1 a check failed, 2 bad input, 3 I/O error.
"""
from __future__ import annotations

import functools
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import io as sio
from .caratheodory import (
    FWBudgetExceeded,
    SamplingExhausted,
    fw_approx,
    plan_for,
    reduce_conic,
    reduce_convex,
    sample_without_replacement,
)
from .envelope import SampledFunction, biconjugate, nonconvexity
from .geometry import PointSet, convex_hull_2d, minkowski_average, minkowski_decay
from .relaxation import (
    InfeasibleProblem,
    SeparableProblem,
    certify,
    gap_bound_approx,
    perturbed_value,
    solve_relaxation,
)
from .sampling_bounds import (
    DistanceProgram,
    concentration_report,
    constraint_sampling_experiment,
    exhaustive_constraint_sampling,
    random_distance_program,
)
from .shapley_folkman import BlockFamily, approx_sf_decompose, sf_decompose
from .svg import point_panel

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3
TOL = 1e-6


def default_seed() -> int:
    raw = os.environ.get("SFKIT_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise click.BadParameter(f"SFKIT_SEED must be an integer, got {raw!r}")


class Run:
    """Collects outputs and checks for one command and writes the manifest."""

    def __init__(self, kind: str, out: Path, config: dict, deterministic: bool):
        self.kind = kind
        self.out = Path(out)
        self.config = config
        self.deterministic = deterministic
        self.files: list[str] = []
        self.checks: dict[str, bool] = {}
        self.error: str | None = None
        self.start = time.perf_counter()

    def _track(self, path: Path):
        name = str(path.relative_to(self.out))
        if name not in self.files:
            self.files.append(name)

    def json(self, name: str, obj):
        self._track(sio.write_json(self.out / name, obj))

    def csv(self, name: str, header, rows):
        self._track(sio.write_csv(self.out / name, header, rows))

    def text(self, name: str, text: str):
        self._track(sio.write_atomic(self.out / name, text))

    def check(self, name: str, ok) -> bool:
        self.checks[name] = bool(ok)
        return bool(ok)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def manifest(self, code: int) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "version": __version__,
            "wall_time": None if self.deterministic else round(time.perf_counter() - self.start, 6),
            "outputs": sorted(self.files) + ["manifest.json"],
            "checks": dict(sorted(self.checks.items())),
            "passed": code == EXIT_OK,
            "exit_code": code,
            "error": self.error,
        }


def command(kind: str):
    """Wrap a subcommand body ``fn(run, **options)`` with manifest and exit-code handling."""

    def deco(fn):
        @click.option("--out", "out", type=click.Path(file_okay=False), default="sfkit-out", show_default=True,
                      help="Output directory.")
        @click.option("--seed", type=int, default=None, help="Random seed (default: $SFKIT_SEED or 0).")
        @click.option("--deterministic", is_flag=True, help="Omit wall time and timestamps from outputs.")
        @functools.wraps(fn)
        def wrapper(out, seed, deterministic, **kw):
            seed = default_seed() if seed is None else seed
            config = {"kind": kind, "seed": seed, **{k: v for k, v in kw.items()}}
            run = Run(kind, Path(out), config, deterministic)
            try:
                fn(run, seed=seed, **kw)
                code = EXIT_OK if run.passed else EXIT_CHECK
            except (sio.InputError, InfeasibleProblem, ValueError) as exc:
                run.error, code = f"{type(exc).__name__}: {exc}", EXIT_INPUT
            except OSError as exc:
                run.error, code = f"{type(exc).__name__}: {exc}", EXIT_IO
            except Exception as exc:  # recorded in the manifest as a failed run
                run.error, code = f"{type(exc).__name__}: {exc}", EXIT_CHECK
            try:
                sio.write_json(run.out / "manifest.json", run.manifest(code))
            except OSError as exc:
                click.echo(f"sfkit: cannot write manifest: {exc}", err=True)
                code = EXIT_IO
            status = "pass" if code == EXIT_OK else "FAIL"
            click.echo(f"{kind}: {status} (exit {code})" + (f" {run.error}" if run.error else ""),
                       err=code != EXIT_OK)
            sys.exit(code)

        return wrapper

    return deco


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="sfkit")
def main():
    """Nonconvexity, Shapley-Folkman and duality-gap toolkit."""


def _pointsets(obj) -> list[PointSet]:
    items = obj["sets"] if isinstance(obj, dict) and "sets" in obj else obj
    if isinstance(items, dict):
        items = [items]
    sets = [PointSet.from_json(s) for s in items]
    if not sets:
        raise ValueError("no point sets given")
    return sets


def _hull_rows(points: np.ndarray):
    return [list(map(float, p)) for p in points]


@main.command()
@command("minkowski")
@click.option("--in", "inp", required=True, type=click.Path(dir_okay=False), help="JSON point set or list of point sets.")
@click.option("--repeat", type=int, default=1, show_default=True, help="Average this many copies of the input list.")
@click.option("--cap", type=int, default=8192, show_default=True, help="Maximum retained points.")
@click.option("--svg/--no-svg", default=True, show_default=True, help="Write an SVG panel for planar sets.")
def minkowski(run: Run, seed, inp, repeat, cap, svg):
    """Minkowski average of point sets, with hull and Hausdorff distance to it."""
    sets = sio.load(inp, _pointsets) * repeat
    avg = minkowski_average(sets, cap=cap, seed=seed)
    header = [f"x{i}" for i in range(avg.dim)]
    run.csv("average.csv", header, _hull_rows(avg.points))
    summary = {"n_sets": len(sets), "points": len(avg), "dim": avg.dim}
    if avg.dim == 2:
        hull = convex_hull_2d(avg)
        run.csv("hull.csv", header, _hull_rows(hull.vertices))
        summary["hull_vertices"] = len(hull)
        if svg:
            lo, hi = avg.points.min(axis=0), avg.points.max(axis=0)
            pad = 0.05 * float(np.max(hi - lo) or 1.0)
            run.text("average.svg", point_panel(avg.points, hull.vertices, lo - pad, hi + pad, run.deterministic))
    if len(sets) == 1 and len(sets[0]) <= cap:
        same = sorted(map(tuple, avg.points)) == sorted(map(tuple, sets[0].points))
        run.check("single_set_identity", same)
    run.check("finite", np.all(np.isfinite(avg.points)))
    run.json("summary.json", summary)


@main.command()
@command("envelope")
@click.option("--in", "inp", required=True, type=click.Path(dir_okay=False), help="SampledFunction JSON.")
@click.option("--rho-k", "ks", type=int, multiple=True, help="Also compute rho_k for these k (repeatable).")
def envelope(run: Run, seed, inp, ks):
    """Convex envelope and nonconvexity measures of a sampled function."""
    f = sio.load(inp, SampledFunction.from_json)
    env = biconjugate(f)
    rep = nonconvexity(f, ks)
    gaps = f.values - env.at_grid
    header = [f"x{i}" for i in range(f.dim)] + ["f", "envelope", "gap"]
    run.csv("envelope.csv", header, [list(map(float, g)) + [float(v), float(e), float(d)]
                                     for g, v, e, d in zip(f.grid, f.values, env.at_grid, gaps)])
    scale = 1.0 + float(np.max(np.abs(f.values)))
    run.json("report.json", {"rho": rep.rho, "argmax": rep.argmax.tolist(),
                             "rho_k": {str(k): v for k, v in sorted(rep.rho_k.items())},
                             "breakpoints": env.breakpoints.tolist()})
    run.check("envelope_below_f", np.all(gaps >= -1e-9 * scale))
    run.check("rho_k_le_rho", all(v <= rep.rho + 1e-9 * scale for v in rep.rho_k.values()))


@main.command()
@command("solve")
@click.option("--in", "inp", required=True, type=click.Path(dir_okay=False), help="SeparableProblem JSON.")
@click.option("--cert", type=click.Choice(["basic", "refined", "approx"]), default="refined", show_default=True)
@click.option("--gamma", type=float, default=1.0, show_default=True, help="Perturbation scale for --cert approx.")
@click.option("--verify", is_flag=True, help="Also compute the exact nonconvex optimum and check the sandwich.")
def solve(run: Run, seed, inp, cert, gamma, verify):
    """Relaxation value, purified point and duality-gap certificate."""
    p = sio.load(inp, SeparableProblem.from_json)
    sol = solve_relaxation(p)
    c = gap_bound_approx(p, sol, gamma=gamma, seed=seed) if cert == "approx" else certify(p, sol)
    bound = {"basic": c.bound_basic, "refined": c.bound_refined, "approx": c.bound_approx}[cert]
    out = c.to_json()
    out["cert"] = cert
    out["bound"] = bound
    out["theta"] = [np.asarray(t).tolist() for t in sol.theta]
    out["dual_lambda"] = sol.dual_lambda.tolist()
    scale = 1.0 + abs(c.lower)
    if verify:
        hp = perturbed_value(p, None, "P", semantics="hull")
        out["optimum"] = hp
        run.check("lower_le_optimum", c.lower <= hp + TOL * scale)
        if cert != "approx":
            run.check("optimum_le_lower_plus_bound", hp <= c.lower + bound + TOL * scale)
    run.json("certificate.json", out)
    run.csv("summary.csv", ["cert", "lower", "upper", "bound", "bound_basic", "bound_refined", "m", "m_tilde"],
            [[cert, c.lower, c.upper, bound, c.bound_basic, c.bound_refined, c.m, c.m_tilde]])
    run.check("refined_le_basic", c.bound_refined <= c.bound_basic + TOL * scale)
    if c.upper is not None:
        run.check("lower_le_upper", c.lower <= c.upper + TOL * scale)
    if cert == "approx":
        run.check("perturbation_within_bound", not c.bound_violated)


@main.command()
@command("sf")
@click.option("--family", "inp", required=True, type=click.Path(dir_okay=False), help="BlockFamily JSON.")
@click.option("--approx", is_flag=True, help="Sampled representation instead of the exact one.")
@click.option("--eps", type=float, default=0.1, show_default=True)
@click.option("--beta", type=float, default=None)
@click.option("--gamma", type=float, default=None)
def sf(run: Run, seed, inp, approx, eps, beta, gamma):
    """Shapley-Folkman decomposition of a point in a sum of convex hulls."""
    fam = sio.load(inp, BlockFamily.from_json)
    if approx:
        res = approx_sf_decompose(fam, eps, beta=beta, gamma=gamma, seed=seed)
        run.json("decomposition.json", res.to_json())
        run.check("errors_within_bounds", res.within_bounds())
        return
    dec = sf_decompose(fam)
    run.json("decomposition.json", dec.to_json())
    run.check("mixed_blocks_le_dim", len(dec.S) <= fam.dim)
    run.check("reconstruction", dec.error <= 1e-8 * (1.0 + float(np.max(np.abs(dec.x)))))


def _matrix(obj) -> np.ndarray:
    M = np.asarray(obj["atoms"] if isinstance(obj, dict) else obj, dtype=float)
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ValueError("atoms must be a finite list of equal-length vectors")
    return M.T  # columns are atoms


def _vector(obj) -> np.ndarray:
    v = np.asarray(obj["weights"] if isinstance(obj, dict) else obj, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValueError("weights must be finite and nonnegative")
    return v


@main.command()
@command("caratheodory")
@click.option("--mode", type=click.Choice(["exact", "fw", "sample"]), default="exact", show_default=True)
@click.option("--atoms", required=True, type=click.Path(dir_okay=False), help="JSON list of N atoms (each a D-vector).")
@click.option("--weights", required=True, type=click.Path(dir_okay=False), help="JSON list of N nonnegative weights.")
@click.option("--eps", type=float, default=0.3, show_default=True, help="Target accuracy for fw/sample.")
@click.option("--conic", is_flag=True, help="Exact mode: conic reduction (support <= D) instead of convex (<= D+1).")
def caratheodory(run: Run, seed, mode, atoms, weights, eps, conic):
    """Exact, Frank-Wolfe or sampled sparse representations."""
    V = sio.load(atoms, _matrix)
    w = sio.load(weights, _vector)
    if w.size != V.shape[1]:
        raise ValueError(f"{w.size} weights for {V.shape[1]} atoms")
    D, N = V.shape
    target = V @ w
    scale = 1.0 + float(np.max(np.abs(target)))
    if mode == "exact":
        comb = reduce_conic(V, w) if conic else reduce_convex(V, w)
        run.check("support", len(comb) <= (D if conic else D + 1))
        run.check("reconstruction", comb.error <= 1e-8 * scale)
        run.json("result.json", comb.to_json())
        return
    if mode == "fw":
        try:
            comb = fw_approx(target, V, eps)
            ok = True
        except FWBudgetExceeded as exc:
            comb, ok = exc.best, False
        run.check("error_le_eps", ok and comb.error <= eps)
        run.json("result.json", comb.to_json())
        return
    total = float(w.sum())
    if total <= 0:
        raise ValueError("weights must not all be zero")
    plan = plan_for(V, w / total, eps)
    try:
        res = sample_without_replacement(V, w / total, plan, seed=seed)
    except SamplingExhausted as exc:
        res = exc.best
    out = res.combination.to_json()
    out.update({"x_error": res.x_error, "weight_error": res.weight_error, "attempts": res.attempts,
                "plan_m": plan.m, "N": N})
    run.check("errors_le_eps", res.ok)
    run.json("result.json", out)


def _population(obj) -> np.ndarray:
    pop = np.asarray(obj["population"] if isinstance(obj, dict) else obj, dtype=float)
    if pop.ndim not in (1, 2) or pop.shape[0] < 2 or not np.all(np.isfinite(pop)):
        raise ValueError("population must be a finite list of at least two scalars or vectors")
    return pop


@main.command()
@command("concentration")
@click.option("--pop", "inp", required=True, type=click.Path(dir_okay=False), help="JSON list of scalars or vectors.")
@click.option("--m", "m", type=int, required=True, help="Sample size.")
@click.option("--eps", "eps", type=float, multiple=True, default=(0.1,), show_default=True, help="Repeatable.")
@click.option("--trials", type=int, default=10_000, show_default=True)
@click.option("--sigma-mode", type=click.Choice(["exact", "monte_carlo", "upper"]), default=None,
              help="Default: exact for N <= 10, else upper.")
def concentration(run: Run, seed, inp, m, eps, trials, sigma_mode):
    """Empirical sampling-without-replacement tails against both tail bounds."""
    pop = sio.load(inp, _population)
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    rows = []
    for e in eps:
        r = concentration_report(pop, m, e, trials=trials, seed=seed, sigma_mode=sigma_mode)
        rows.append(r.to_row())
        slack = 3 * r.std_error
        run.check(f"hs_eps={e:g}", r.empirical <= r.bound_hs + slack)
        run.check(f"bs_eps={e:g}", r.empirical <= r.bound_bs + slack)
    run.csv("concentration.csv", ["N", "m", "epsilon", "bound_hs", "bound_bs", "empirical", "sigma_m"], rows)


@main.command()
@command("constraints")
@click.option("--lp", "inp", type=click.Path(dir_okay=False), default=None,
              help="DistanceProgram JSON {A, b, center}; a random one is generated when omitted.")
@click.option("--k", "ks", type=int, multiple=True, default=(2, 3, 4), show_default=True, help="Repeatable.")
@click.option("--trials", type=int, default=500, show_default=True)
@click.option("--exhaustive", is_flag=True, help="Enumerate every k-subset instead of sampling.")
@click.option("--m-override", type=int, default=None, help="Replace min(n, d+1) in the bound.")
def constraints(run: Run, seed, inp, ks, trials, exhaustive, m_override):
    """Suboptimality from keeping only k constraints, against the sampling bound."""
    if inp is None:
        prog = random_distance_program(np.random.default_rng(seed))
        run.json("lp.json", prog.to_json())
    else:
        prog = sio.load(inp, DistanceProgram.from_json)
    rows = []
    for k in ks:
        if not 0 < k <= prog.n:
            raise ValueError(f"k={k} outside [1, {prog.n}]")
        if exhaustive:
            rep = exhaustive_constraint_sampling(prog, k, m_override)
        else:
            rep = constraint_sampling_experiment(prog, k, trials, seed, m_override)
        rows.append(rep.to_row())
        run.check(f"slack_le_bound_k={k}", rep.holds_worst_case)
    run.csv("constraints.csv", ["k", "subsets", "optimum", "max_slack", "min_slack", "bound",
                                "worst_case_ok", "some_subset_ok"], rows)


@main.command()
@command("figure1")
@click.option("--n", "n_list", type=int, multiple=True, default=(1, 2, 4, 10), show_default=True, help="Repeatable.")
@click.option("--samples", type=int, default=256, show_default=True, help="Points on the l_1/2 sphere.")
@click.option("--cap", type=int, default=8192, show_default=True)
@click.option("--sets", "sets_path", type=click.Path(dir_okay=False), default=None,
              help="Average user point sets (one panel) instead of l_1/2 spheres.")
def figure1(run: Run, seed, n_list, samples, cap, sets_path):
    """Minkowski averages of l_1/2 spheres approaching the l_1 ball."""
    if sets_path is not None:
        sets = sio.load(sets_path, _pointsets)
        avg = minkowski_average(sets, cap=cap, seed=seed)
        if avg.dim != 2:
            raise ValueError("panel mode needs planar point sets")
        hull = convex_hull_2d(avg)
        run.text("panel_avg.svg", point_panel(avg.points, hull.vertices, deterministic=run.deterministic))
        run.csv("panel.csv", ["n", "points", "hull_vertices"], [[len(sets), len(avg), len(hull)]])
        run.check("finite", np.all(np.isfinite(avg.points)))
        return
    if not n_list:
        raise ValueError("n_list must be nonempty")
    res = minkowski_decay(sorted(set(n_list)), samples=samples, cap=cap, seed=seed)
    for n, _, ps in res:
        run.text(f"panel_n{n}.svg", point_panel(ps.points, convex_hull_2d(ps).vertices,
                                                 deterministic=run.deterministic))
    run.csv("dH.csv", ["n", "d_H"], [[n, d] for n, d, _ in res])
    ds = [d for _, d, _ in res]
    run.check("d_H_nonincreasing", all(b <= a for a, b in zip(ds, ds[1:])))


if __name__ == "__main__":
    main()
