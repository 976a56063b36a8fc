import json
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instances import convex_problem, random_problem
from sfkit.envelope import SampledFunction
from sfkit.relaxation import (
    EnumerationBudgetExceeded,
    InfeasibleProblem,
    SeparableProblem,
    approx_budget,
    certify,
    dual_value,
    gap_bound_approx,
    gap_bound_basic,
    gap_bound_nonlinear,
    perturbed_value,
    purify,
    refined_from_profiles,
    solve_relaxation,
)

DATA = Path(__file__).resolve().parent.parent / "data"


def frozen_problem():
    return SeparableProblem.from_json(json.loads((DATA / "problem.json").read_text()))


def test_frozen_certificate():
    p = frozen_problem()
    c = certify(p)
    assert c.lower == pytest.approx(-2.6226450229401372, abs=1e-10)
    assert c.bound_basic == pytest.approx(3.0003020805207665, abs=1e-10)
    assert c.bound_refined == pytest.approx(3.0003020805207665, abs=1e-10)
    assert c.m_tilde == 1
    assert perturbed_value(p, None, "P", semantics="hull") == pytest.approx(-2.4682535312339478, abs=1e-8)


def test_knapsack_style_instance():
    # two blocks with values at {0, 1}, x1 + x2 <= 1, minimize -x1 - x2 + 0.5 (x1 x2 not modeled)
    f = SampledFunction([0.0, 1.0], [0.0, -1.0])
    p = SeparableProblem([f, f], [[1.0, 1.0]], [1.5])
    sol = solve_relaxation(p)
    assert sol.value == pytest.approx(-1.5)
    assert sol.dual_lambda.tolist() == pytest.approx([1.0])
    assert dual_value(p, sol.dual_lambda) == pytest.approx(sol.value)
    assert perturbed_value(p, None, "P", semantics="grid") == pytest.approx(-1.0)
    assert perturbed_value(p, None, "P", semantics="hull") == pytest.approx(-1.5)


def test_infeasible():
    f = SampledFunction([0.0, 1.0], [0.0, 0.0])
    with pytest.raises(InfeasibleProblem):
        solve_relaxation(SeparableProblem([f], [[1.0]], [-1.0]))


def test_convex_instance_has_zero_gap():
    p = convex_problem(np.random.default_rng(2))
    c = certify(p)
    assert c.bound_basic == 0.0 and c.bound_refined == 0.0
    assert perturbed_value(p, None, "P", semantics="hull") == pytest.approx(c.lower, abs=1e-7)


def test_purify_randomized_is_seeded():
    p = random_problem(np.random.default_rng(11), n=8, m=2)
    sol = solve_relaxation(p)
    a, b = purify(sol, p, seed=3), purify(sol, p, seed=3)
    assert a.choice == b.choice


def test_refined_dp():
    prof = np.array([[0.0, 1.0, 1.0], [0.0, 0.5, 2.0]])
    assert refined_from_profiles(prof, 2) == 0.0
    assert refined_from_profiles(prof, 3) == 1.0
    assert refined_from_profiles(prof, 4) == 2.0
    assert refined_from_profiles(prof, 5) == 3.0


def test_approx_budget():
    assert approx_budget(10, 2, 1e-9, 1.0) == 13
    assert approx_budget(10, 2, 1e9, 1.0) == 11
    assert approx_budget(10, 0, 1.0, 1.0) == 11


def test_nonlinear_bound():
    g = gap_bound_nonlinear(0.5, 0.25, 3)
    assert g.objective_gap == 2.0 and g.constraint_shift.tolist() == [1.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        gap_bound_nonlinear(-1.0, 0.0, 1)


def test_enumeration_limit():
    p = random_problem(np.random.default_rng(0), n=10, K=4, m=1)
    with pytest.raises(EnumerationBudgetExceeded):
        perturbed_value(p, None, "P", semantics="grid", limit=10)


def test_m_override_changes_basic_bound():
    p = random_problem(np.random.default_rng(7), n=8, m=3)
    assert gap_bound_basic(p, m_override=0) <= gap_bound_basic(p, m_override=3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sandwich_and_duality(seed):
    p = random_problem(np.random.default_rng(seed))
    sol = solve_relaxation(p)
    c = certify(p, sol)
    scale = 1.0 + abs(c.lower)
    assert dual_value(p, sol.dual_lambda) == pytest.approx(sol.value, abs=1e-8 * scale)
    assert sol.nonzeros <= p.n + sol.m_tilde
    assert c.bound_refined <= c.bound_basic + 1e-12
    hp = perturbed_value(p, None, "P", semantics="hull")
    assert c.lower <= hp + 1e-6 * scale
    assert hp <= c.lower + c.bound_refined + 1e-6 * scale


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.3, 1.0, 3.0]))
def test_approx_certificate_properties(seed, gamma):
    p = random_problem(np.random.default_rng(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = gap_bound_approx(p, gamma=gamma, seed=seed % 97)
    assert c.s <= p.n + c.m_tilde + 1
    scale = 1.0 + abs(c.lower)
    lo = perturbed_value(p, c.u2, "CoP")
    hp = perturbed_value(p, c.u2, "P", semantics="hull")
    assert lo <= hp + 1e-6 * scale
    assert hp <= c.lower + c.bound_approx + 1e-6 * scale
