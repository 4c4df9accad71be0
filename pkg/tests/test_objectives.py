import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acgattack.geometry import make_rng
from acgattack.objectives import (
    BoxScaledObjective, Quadratic, cw_loss, cw_loss_and_logit_grad, cw_target_class,
    multimodal_objective, quadratic_objective,
)

from conftest import central_diff, rel_err


@pytest.mark.parametrize("logits,c,expected", [
    ((2, 1, 0), 0, -1.0),
    ((2, 1, 0), 1, 1.0),
    ((3, 3, 3), 2, 0.0),
])
def test_cw_loss(logits, c, expected):
    assert cw_loss(logits, c) == expected


def test_cw_loss_needs_two_classes():
    with pytest.raises(ValueError):
        cw_loss([1.0], 0)


@pytest.mark.parametrize("logits,c,expected", [
    ((0.1, 0.9, 0.5), 1, 2),
    ((3, 1, 1), 0, 1),  # tie -> lowest index
    ((5, 2), 1, 0),
])
def test_cw_target_class(logits, c, expected):
    assert cw_target_class(logits, c) == expected


logit_vecs = arrays(np.float64, st.integers(2, 6), elements=st.floats(-50, 50))


@settings(max_examples=200)
@given(logit_vecs, st.data(), st.floats(-100, 100))
def test_cw_properties(z, data, shift):
    c = data.draw(st.integers(0, len(z) - 1))
    assert cw_target_class(z, c) != c
    assert cw_loss(z + shift, c) == pytest.approx(cw_loss(z, c), abs=1e-9)
    v, g = cw_loss_and_logit_grad(z, c)
    assert v == cw_loss(z, c)
    assert g.sum() == 0.0 and g[c] == -1.0


def test_quadratic_examples():
    f = quadratic_objective(Quadratic(np.eye(2), np.zeros(2)))
    assert f.value([1.0, 1.0]) == 2.0
    np.testing.assert_array_equal(f.grad([1.0, 1.0]), [2.0, 2.0])
    q = Quadratic.random(4, make_rng(3))
    np.testing.assert_array_equal(quadratic_objective(q).grad(np.zeros(4)), q.b)


def test_quadratic_rejects_non_spd():
    with pytest.raises(ValueError):
        Quadratic(np.diag([1.0, -1.0]), np.zeros(2))
    with pytest.raises(ValueError):
        Quadratic(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))


def test_quadratic_gradient_fd():
    q = Quadratic.random(5, make_rng(0))
    f = quadratic_objective(q)
    x = make_rng(1).standard_normal(5)
    assert rel_err(f.grad(x), central_diff(f.value, x)) <= 1e-6


@pytest.mark.parametrize("n", [1, 3, 10])
def test_quadratic_brute_force(n):
    rng = make_rng(n)
    q = Quadratic.random(n, rng)
    x = rng.standard_normal(n)
    brute = sum(q.A[i, j] * x[i] * x[j] for i in range(n) for j in range(n)) + sum(q.b[i] * x[i] for i in range(n))
    assert quadratic_objective(q).value(x) == pytest.approx(brute, rel=1e-12)


def test_multimodal_origin():
    f = multimodal_objective()
    assert f.value([0.0, 0.0]) == pytest.approx(-10 + math.e, abs=1e-10)
    assert f.value([0.0, 0.0]) == pytest.approx(-7.2817181715, abs=1e-10)
    np.testing.assert_array_equal(f.grad([0.0, 0.0]), [0.0, 0.0])


def test_multimodal_gradient_fd():
    f = multimodal_objective()
    x = np.array([0.3, 0.4])
    assert rel_err(f.grad(x), central_diff(f.value, x)) <= 1e-5


@settings(max_examples=100)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_multimodal_symmetry(x, y):
    f = multimodal_objective()
    v = f.value([x, y])
    assert f.value([-x, y]) == v
    assert f.value([x, -y]) == v


def test_box_scaled_gradient():
    f = BoxScaledObjective(multimodal_objective(), -2.0, 2.0, negate=True)
    x = np.array([0.61, 0.37])
    assert rel_err(f.grad(x), central_diff(f.value, x)) <= 1e-6
    assert f.value([0.5, 0.5]) == pytest.approx(10 - math.e)
