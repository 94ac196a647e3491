import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bcl.errors import DimensionMismatch, InvalidBounds
from bcl.plant import (
    PlantModel,
    PlantState,
    evaluate_disturbance,
    make_paper_disturbance,
    make_paper_plant,
    plant_derivative,
    saturate,
    zero_disturbance,
)

finite = st.floats(-1e6, 1e6)


def _scalar_plant():
    return PlantModel(n=1, f=(lambda xb: 0.0,), g=(lambda xb: 1.0,), u_min=-5.0, u_max=5.0)


@pytest.mark.parametrize("u, out", [(7.0, 5.0), (0.0, 0.0), (-6.0, -5.0), (5.0, 5.0), (-5.0, -5.0)])
def test_saturate_examples(u, out):
    assert saturate(u, -5.0, 5.0) == out


def test_saturate_bounds():
    with pytest.raises(InvalidBounds):
        saturate(1.0, 2.0, 2.0)


@given(finite)
def test_saturate_idempotent(u):
    s = saturate(u, -5, 5)
    assert saturate(s, -5, 5) == s


@given(finite, finite)
def test_saturate_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert saturate(lo, -5, 5) <= saturate(hi, -5, 5)


def test_scalar_derivative():
    m = _scalar_plant()
    np.testing.assert_array_equal(plant_derivative(m, PlantState([0.0]), 2.0, [0.0]), [2.0])
    np.testing.assert_array_equal(plant_derivative(m, PlantState([0.0]), 7.0, [0.0]), [5.0])
    with pytest.raises(DimensionMismatch):
        plant_derivative(m, PlantState([0.0, 1.0]), 0.0, [0.0])


def test_paper_plant_at_initial_state():
    m = make_paper_plant()
    x = np.array([-0.8, 0.9, 0.1])
    w = evaluate_disturbance(make_paper_disturbance(), 0.0, x)
    # hand evaluation of the example functions
    f1 = math.sin(-0.8) / 1.64
    f2 = math.tanh(0.9) * math.exp(-(0.72**4))
    f3 = -0.72
    w_hand = [0.1 * math.sin(-0.8), 0.15 * math.sin(-0.72), 0.0]
    expected = [f1 + 0.9 + w_hand[0], f2 + 0.1 + w_hand[1], f3 + 0.0 + w_hand[2]]
    got = plant_derivative(m, PlantState(x), 0.0, w)
    np.testing.assert_allclose(got, expected, atol=1e-15)


def test_paper_functions():
    m = make_paper_plant()
    assert m.f[0]([0.0]) == 0.0
    assert m.f[2]([2.0, 3.0]) == 6.0
    # tanh(1)/e = 0.761594 * 0.367879
    assert m.f[1]([1.0, 1.0]) == pytest.approx(0.2801748, abs=1e-7)
    assert (m.u_min, m.u_max) == (-5.0, 5.0)
    assert m.g_values(np.zeros(3)).tolist() == [1.0, 1.0, 1.0]


@given(st.integers(0, 1), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2))
def test_linear_in_next_state(i, a, b, c, h):
    m = make_paper_plant()
    x = np.array([a, b, c])
    xp = x.copy()
    xp[i + 1] += h
    w = np.zeros(3)
    d = plant_derivative(m, PlantState(xp), 0.0, w) - plant_derivative(m, PlantState(x), 0.0, w)
    # the perturbed component changes its own f as well, so only stage i is compared
    assert d[i] == pytest.approx(m.g_values(x)[i] * h, abs=1e-12)


def test_disturbance_examples():
    d = make_paper_disturbance()
    np.testing.assert_array_equal(evaluate_disturbance(d, 0.0, np.zeros(3)), np.zeros(3))
    x = np.array([0.3, -0.2, 0.5])
    base = d.base(10.0, x)
    np.testing.assert_allclose(evaluate_disturbance(d, 10.0, x), base + 0.2, atol=1e-15)
    np.testing.assert_array_equal(evaluate_disturbance(d, 5.0, x), d.base(5.0, x))
    assert d.pulse(9.999) == 0.0


@given(st.floats(25.0, 100.0), st.floats(1e-3, 50.0))
def test_pulses_decay(t1, dt):
    d = make_paper_disturbance()
    assert d.pulse(t1 + dt) < d.pulse(t1)


def test_model_validation():
    with pytest.raises(InvalidBounds):
        PlantModel(n=1, f=(lambda x: 0.0,), g=(lambda x: 1.0,), u_min=1.0, u_max=2.0)
    with pytest.raises(DimensionMismatch):
        PlantModel(n=2, f=(lambda x: 0.0,), g=(lambda x: 1.0,), u_min=-1.0, u_max=1.0)
    assert np.all(zero_disturbance(3).base(1.0, np.ones(3)) == 0)
