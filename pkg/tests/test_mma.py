import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coolopt.mma import ConvergenceCriteria, MmaSettings, MmaState, converged, max_change, minimize, mma_step

unit = st.floats(0.0, 1.0)
vec = st.integers(1, 12).flatmap(lambda n: st.tuples(arrays(float, n, elements=unit),
                                                     arrays(float, n, elements=st.floats(-1e3, 1e3))))


def test_one_dimensional_quadratic():
    x, hist = minimize(lambda v: (float((v[0] - 0.3) ** 2), 2 * (v - 0.3)), [0.8],
                       criteria=ConvergenceCriteria(1e-9, 30))
    assert abs(x[0] - 0.3) < 1e-3


def test_box_clipped_minimizer():
    c = np.array([-0.5, 0.4, 1.7])
    x, _ = minimize(lambda v: (float(np.sum((v - c) ** 2)), 2 * (v - c)), np.full(3, 0.5),
                    criteria=ConvergenceCriteria(1e-8, 300))
    assert np.allclose(x, [0.0, 0.4, 1.0], atol=1e-4)


def test_stopping_rule_is_strict():
    assert not converged(np.array([0.0]), np.array([1e-3]))
    assert converged(np.array([0.0]), np.array([0.999e-3]))
    assert not converged(np.zeros(3), np.array([0.0, 2e-3, 0.0]))


def test_minimize_stops_at_first_small_change():
    c = np.array([0.1, 0.9, 0.35])
    _, hist = minimize(lambda v: (float(np.sum((v - c) ** 2)), 2 * (v - c)), np.zeros(3))
    dx = [h[1] for h in hist]
    assert dx[-1] < 1e-3
    assert all(d >= 1e-3 for d in dx[:-1])


@given(vec, st.floats(0.01, 1.0))
def test_step_respects_bounds_and_move_limit(data, move):
    x, g = data
    settings = MmaSettings(move=move)
    state = MmaState.start(x, settings=settings)
    x_new, state = mma_step(state, x, 1.0, g, settings=settings)
    assert np.all((x_new >= 0.0) & (x_new <= 1.0))
    assert max_change(x_new, x) <= move + 1e-12
    assert np.all(state.low < x) and np.all(x < state.upp)


@given(vec)
def test_step_descends_along_gradient(data):
    x, g = data
    x_new, _ = mma_step(MmaState.start(x), x, 1.0, g)
    assert np.all((x_new - x) * g <= 1e-15)


def test_zero_gradient_leaves_design_unchanged():
    x = np.array([0.2, 0.7])
    x_new, _ = mma_step(MmaState.start(x), x, 1.0, np.zeros(2))
    assert np.array_equal(x_new, x)


def test_invalid_inputs():
    x = np.array([0.5])
    with pytest.raises(ValueError):
        mma_step(MmaState.start(x), x, np.nan, np.zeros(1))
    with pytest.raises(ValueError):
        mma_step(MmaState.start(x), x, 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        MmaSettings(move=0.0)
    with pytest.raises(ValueError):
        ConvergenceCriteria(tol_dx=0.0)


@given(st.integers(0, 2**32 - 1))
def test_convex_separable_quadratics_converge(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 10))
    w, c = rng.uniform(0.5, 5, n), rng.uniform(-0.3, 1.3, n)
    x, _ = minimize(lambda v: (float(np.sum(w * (v - c) ** 2)), 2 * w * (v - c)), rng.uniform(0, 1, n),
                    criteria=ConvergenceCriteria(1e-7, 500))
    assert max_change(x, np.clip(c, 0, 1)) < 1e-3
