import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acgattack.geometry import FeasibleRegion, center_init, project, random_init


def test_bounds_and_diameter():
    r = FeasibleRegion([0.95, 0.05], 0.1)
    np.testing.assert_allclose(r.upper, [1.0, 0.15])
    np.testing.assert_allclose(r.lower, [0.85, 0.0])
    assert r.diameter == pytest.approx(np.hypot(0.15, 0.15))


@pytest.mark.parametrize("x0,eps,x,expected", [
    ((0.5, 0.5), 0.1, (0.55, 0.45), (0.55, 0.45)),
    ((0.5, 0.5), 0.1, (0.7, 0.5), (0.6, 0.5)),
    ((0.95, 0.05), 0.1, (1.2, -0.1), (1.0, 0.0)),
])
def test_project_examples(x0, eps, x, expected):
    np.testing.assert_allclose(project(FeasibleRegion(x0, eps), x), expected)


def test_project_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        project(FeasibleRegion([0.5, 0.5], 0.1), [0.5, 0.5, 0.5])


def test_region_validation():
    with pytest.raises(ValueError):
        FeasibleRegion([0.5], 0.0)
    with pytest.raises(ValueError):
        FeasibleRegion([1.5], 0.1)


def test_center_init():
    np.testing.assert_allclose(center_init(FeasibleRegion([0.5, 0.5], 0.1)), [0.5, 0.5])
    r = FeasibleRegion([0.95, 0.05], 0.1)
    c = center_init(r)
    np.testing.assert_allclose(c, [0.925, 0.075])
    np.testing.assert_array_equal(project(r, c), c)


def test_random_init_determinism_and_feasibility():
    r = FeasibleRegion([0.95, 0.05], 0.1)
    np.testing.assert_array_equal(random_init(r, 7), random_init(r, 7))
    assert not np.array_equal(random_init(r, 7), random_init(r, 8))
    samples = np.array([random_init(r, s) for s in range(10_000)])
    assert np.all(samples >= r.lower) and np.all(samples <= r.upper)
    # uniform on [l, u]: sd of the mean is (u - l) / sqrt(12 n)
    sd = (r.upper - r.lower) / np.sqrt(12 * len(samples))
    assert np.all(np.abs(samples.mean(axis=0) - (r.upper + r.lower) / 2) < 3 * sd)


unit = st.floats(0.0, 1.0)
points = arrays(np.float64, 3, elements=st.floats(-3.0, 3.0))


@settings(max_examples=200)
@given(arrays(np.float64, 3, elements=unit), st.floats(1e-3, 0.6), points)
def test_projection_properties(x0, eps, x):
    r = FeasibleRegion(x0, eps)
    p = project(r, x)
    np.testing.assert_array_equal(project(r, p), p)
    assert np.max(np.abs(p - r.x_orig)) <= eps + 1e-15
    assert np.all((p >= 0) & (p <= 1))
    assert r.contains(p)


@settings(max_examples=100)
@given(arrays(np.float64, 4, elements=unit), st.floats(1e-3, 0.6))
def test_diameter_is_corner_distance(x0, eps):
    r = FeasibleRegion(x0, eps)
    corners = np.array(np.meshgrid(*zip(r.lower, r.upper))).reshape(4, -1).T
    brute = max(np.linalg.norm(a - b) for a in corners for b in corners)
    assert r.diameter == pytest.approx(brute, rel=1e-12, abs=1e-15)
