import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfkit.envelope import (
    EnvelopeLimitError,
    RhoBudgetExceeded,
    SampledFunction,
    biconjugate,
    nonconvexity,
    rho,
    rho_argmax,
    rho_k,
)


def sqrt_abs(n=201):
    x = np.linspace(-1, 1, n)
    return SampledFunction(x, np.sqrt(np.abs(x)))


def test_sqrt_abs_frozen():
    f = sqrt_abs()
    assert rho(f) == pytest.approx(0.25, abs=1e-12)
    assert rho_argmax(f).tolist() in ([-0.25], [0.25])
    assert rho_k(f, 2) == pytest.approx(0.25, abs=1e-12)


def test_zigzag():
    f = SampledFunction([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 0.0, 1.0])
    env = biconjugate(f)
    assert env.at_grid.tolist() == [0.0, 0.0, 0.0, 1.0]
    assert rho(f) == 1.0
    assert rho_k(f, 1) == 0.0
    assert env(0.5) == 0.0


def test_concave_bowl_2d():
    gx, gy = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))
    G = np.column_stack([gx.ravel(), gy.ravel()])
    f = SampledFunction(G, -np.sum(G**2, axis=1))
    assert rho(f) == pytest.approx(2.0)
    assert rho_k(f, 2) == pytest.approx(2.0)


def test_single_point_and_errors():
    f = SampledFunction([0.3], [1.0])
    assert rho(f) == 0.0
    with pytest.raises(ValueError):
        SampledFunction([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        SampledFunction([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        rho_k(sqrt_abs(11), 0)


def test_large_multidim_grid_refused():
    g = np.random.default_rng(0).normal(size=(600, 2))
    with pytest.raises(EnvelopeLimitError):
        biconjugate(SampledFunction(g, np.zeros(600)))


def test_rho_k_budget():
    g = np.random.default_rng(1).normal(size=(100, 2))
    f = SampledFunction(g, np.sin(g[:, 0]))
    with pytest.raises(RhoBudgetExceeded):
        rho_k(f, 2, budget=1000)
    assert rho_k(f, 3, budget=1000) == rho(f)  # k >= dim + 1 needs no enumeration


def test_json_round_trip():
    f = sqrt_abs(11)
    g = SampledFunction.from_json(f.to_json())
    assert np.array_equal(f.grid, g.grid) and np.array_equal(f.values, g.values)


def test_nonconvexity_report():
    rep = nonconvexity(sqrt_abs(), ks=(1, 2, 3))
    assert rep.rho_k[1] == 0.0 and rep.rho_k[3] == pytest.approx(rep.rho)


@st.composite
def functions_1d(draw):
    n = draw(st.integers(2, 30))
    x = np.sort(np.array(draw(st.lists(st.integers(-500, 500), min_size=n, max_size=n, unique=True)), dtype=float)) / 100
    y = np.array(draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n)))
    return SampledFunction(x, y)


@settings(max_examples=80, deadline=None)
@given(functions_1d())
def test_envelope_is_convex_minorant(f):
    env = biconjugate(f)
    x, e = f.grid[:, 0], env.at_grid
    assert np.all(e <= f.values + 1e-9)
    slopes = np.diff(e) / np.diff(x)
    assert np.all(np.diff(slopes) >= -1e-6 * (1 + np.abs(slopes[:-1])))
    assert e[0] == pytest.approx(f.values[0]) and e[-1] == pytest.approx(f.values[-1])


@settings(max_examples=60, deadline=None)
@given(functions_1d())
def test_rho_k_monotone_and_bounded(f):
    r = rho(f)
    vals = [rho_k(f, k) for k in (1, 2, 3)]
    assert vals[0] == 0.0
    assert vals[0] <= vals[1] + 1e-12 <= vals[2] + 2e-12
    assert vals[2] <= r + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=40, unique=True),
       st.floats(0.1, 5), st.floats(-2, 2))
def test_convex_samples_have_zero_rho(xs, a, b):
    x = np.sort(np.array(xs))
    if np.any(np.diff(x) < 1e-6):
        return
    f = SampledFunction(x, a * x**2 + b * x)
    assert rho(f) == 0.0
