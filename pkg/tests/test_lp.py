import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog as scipy_linprog

from sfkit.lp import linprog


def test_textbook_lp():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
    r = linprog([-3, -5], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18])
    assert r.ok
    assert r.x.tolist() == pytest.approx([2.0, 6.0])
    assert r.fun == pytest.approx(-36.0)
    assert r.ineq_duals.tolist() == pytest.approx([0.0, 1.5, 1.0])


def test_infeasible_and_unbounded():
    assert linprog([1.0], A_ub=[[1.0]], b_ub=[-1.0]).status == "infeasible"
    assert linprog([-1.0], A_ub=[[-1.0]], b_ub=[0.0]).status == "unbounded"


def test_redundant_equalities():
    r = linprog([1, 1], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2])
    assert r.ok and r.fun == pytest.approx(1.0)


def test_degenerate_cycling_example():
    # Beale's example cycles under the textbook rule; Bland's rule terminates
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    r = linprog(c, A_ub=A, b_ub=[0, 0, 1])
    assert r.ok and r.fun == pytest.approx(-0.05)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10_000))
def test_matches_highs(seed):
    rng = np.random.default_rng(seed)
    n, mu, me = rng.integers(1, 7), rng.integers(0, 5), rng.integers(0, 3)
    A_ub, A_eq = rng.normal(size=(mu, n)), rng.normal(size=(me, n))
    x0 = rng.random(n)
    b_ub = A_ub @ x0 + rng.random(mu)
    b_eq = A_eq @ x0
    c = rng.normal(size=n)
    A_box, b_box = np.eye(n), np.full(n, 3.0)
    A_all, b_all = np.vstack([A_ub, A_box]), np.concatenate([b_ub, b_box])
    ours = linprog(c, A_ub=A_all, b_ub=b_all, A_eq=A_eq if me else None, b_eq=b_eq if me else None)
    ref = scipy_linprog(c, A_ub=A_all, b_ub=b_all, A_eq=A_eq if me else None, b_eq=b_eq if me else None,
                        method="highs")
    assert ours.ok and ref.status == 0
    assert ours.fun == pytest.approx(ref.fun, abs=1e-7)
    # dual feasibility: c + A_ub^T y_ub - A_eq^T y_eq >= 0 on the reduced costs
    assert np.all(ours.ineq_duals >= 0)
    primal_slack = b_all - A_all @ ours.x
    assert abs(float(ours.ineq_duals @ primal_slack)) <= 1e-7
