import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sfkit.caratheodory import (
    FWBudgetExceeded,
    NormSpec,
    SamplingExhausted,
    fw_approx,
    fw_budget,
    plan_for,
    reduce_conic,
    reduce_convex,
    required_sample_size,
    sample_size,
    sample_without_replacement,
)


def test_reduce_conic_known_instance():
    V = np.array([[1.0, 0.0, 1.0, 2.0], [0.0, 1.0, 1.0, 1.0]])
    w = np.array([1.0, 1.0, 1.0, 1.0])
    out = reduce_conic(V, w)
    assert len(out) <= 2
    assert np.allclose(V[:, out.atom_indices] @ out.weights, V @ w)
    assert np.all(out.weights > 0)


def test_reduce_convex_square_centroid():
    V = np.array([[0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    out = reduce_convex(V, np.full(4, 0.25))
    assert len(out) <= 3
    assert out.weights.sum() == pytest.approx(1.0)
    assert out.error <= 1e-12


def test_reduce_convex_needs_simplex_weights():
    with pytest.raises(ValueError):
        reduce_convex(np.eye(2), np.array([0.3, 0.3]))


def test_zero_weights():
    out = reduce_conic(np.eye(3), np.zeros(3))
    assert len(out) == 0 and out.error == 0.0


def test_fw_budget_frozen():
    assert fw_budget(2, 1.0, 0.5) == 64
    assert fw_budget(4, 1.0, 1.0) == 32


def test_fw_unit_vectors():
    V = np.eye(50)
    target = np.full(50, 0.02)
    out = fw_approx(target, V, 0.3)
    assert out.error <= 0.3
    assert len(out) <= fw_budget(2, 1.0, 0.3)
    assert all(a >= b - 1e-12 for a, b in zip(out.history, out.history[1:]))


def test_fw_target_outside_hull():
    with pytest.raises(FWBudgetExceeded) as info:
        fw_approx(np.array([5.0, 5.0]), np.eye(2), 0.1)
    assert info.value.best is not None


def test_sample_size_formula():
    # t = c (sqrt(N) R / eps)^2 with c = 1, N = 100, R = 0.01, eps = 0.1 -> t = 1
    assert sample_size(100, 0.1, 0.01, 1.0) == math.ceil(1 + 100 * 0.5)
    assert sample_size(100, 1e-9, 1.0, 1.0) == 100
    assert sample_size(100, 1e9, 1.0, 1.0) == 1


def test_required_sample_size_variants():
    lin = required_sample_size(200, 0.2, 0.01, "linf", dim=5)
    assert lin.c == pytest.approx(2 * math.log(20))
    ban = required_sample_size(200, 0.2, 0.01, "banach", c=1.0)
    assert ban.m <= lin.m
    with pytest.raises(ValueError):
        required_sample_size(10, 0.1, 1.0, "linf")


def test_sampling_full_plan_is_exact():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(3, 20))
    w = rng.random(20)
    w /= w.sum()
    plan = plan_for(V, w, 1e-6)
    assert plan.m == 20
    res = sample_without_replacement(V, w, plan, seed=1)
    assert res.ok and res.x_error <= 1e-12


def test_sampling_frozen_plan():
    plan = plan_for(np.eye(50), np.full(50, 0.02), 0.3)
    assert plan.m == 37
    res = sample_without_replacement(np.eye(50), np.full(50, 0.02), plan, seed=7)
    assert res.ok and res.x_error <= 0.3


def test_sampling_exhausted_reports_best():
    V = np.array([[0.0, 10.0]])
    w = np.array([0.5, 0.5])
    plan = required_sample_size(2, 0.01, 0.0, "banach", c=1.0)  # m = 1 cannot work
    with pytest.raises(SamplingExhausted) as info:
        sample_without_replacement(V, w, plan, seed=0, max_retries=4)
    assert info.value.best.attempts >= 1


def test_norms():
    v = np.array([3.0, -4.0])
    assert NormSpec("l2")(v) == 5.0
    assert NormSpec("linf")(v) == 4.0
    assert NormSpec("lp", 4.0).smoothness_D == pytest.approx(math.sqrt(3))
    with pytest.raises(ValueError):
        NormSpec("lp", 1.5)


mats = st.integers(1, 6).flatmap(
    lambda D: st.integers(1, 25).flatmap(
        lambda N: st.tuples(
            arrays(np.float64, (D, N), elements=st.floats(-5, 5, allow_nan=False)),
            arrays(np.float64, (N,), elements=st.floats(0, 3, allow_nan=False)),
        )
    )
)


@settings(max_examples=150, deadline=None)
@given(mats)
def test_conic_support_and_reconstruction(data):
    V, w = data
    out = reduce_conic(V, w)
    target = V @ w
    assert len(out) <= V.shape[0]
    assert np.all(out.weights >= 0)
    assert np.linalg.norm(V[:, out.atom_indices] @ out.weights - target) <= 1e-8 * (1 + np.abs(V).max() * w.sum())


@settings(max_examples=150, deadline=None)
@given(mats)
def test_convex_support_and_reconstruction(data):
    V, w = data
    if w.sum() <= 1e-6:
        return
    w = w / w.sum()
    out = reduce_convex(V, w)
    assert len(out) <= V.shape[0] + 1
    assert out.weights.sum() == pytest.approx(1.0)
    assert out.error <= 1e-8 * (1 + np.abs(V).max())


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 1000), st.floats(1e-3, 10), st.floats(0, 5), st.floats(0.1, 10))
def test_sample_size_in_range_and_monotone(N, eps, R, c):
    m = sample_size(N, eps, R, c)
    assert 1 <= m <= N
    assert sample_size(N, eps / 2, R, c) >= m
