import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ddsaddle.geometry import (DecisionPoint, DegenerateBoxError, DimensionError,
                               OriginNotInteriorError, ProductBox, diameter, inner_radius,
                               project, shrink)

EV_BOX = ProductBox.uniform(-1.0, 2.0, 3, 3)


def test_decision_point_blocks():
    z = DecisionPoint.from_blocks([1, 2], [3])
    assert z.n_x == 2 and z.n_y == 1
    np.testing.assert_array_equal(z.x, [1, 2])
    np.testing.assert_array_equal(z.y, [3])
    assert len(z) == 3
    np.testing.assert_array_equal(np.asarray(z), [1, 2, 3])


@pytest.mark.parametrize("values,n_x,n_y", [([1, 2, 3], 1, 1), ([1, 2], 0, 2)])
def test_decision_point_rejects_bad_split(values, n_x, n_y):
    with pytest.raises(DimensionError):
        DecisionPoint(values, n_x, n_y)


def test_box_rejects_empty_interior():
    with pytest.raises(DegenerateBoxError):
        ProductBox([0.0, 1.0], [1.0, 1.0], 1, 1)
    with pytest.raises(DimensionError):
        ProductBox([0.0], [1.0, 2.0], 1, 1)


def test_project_examples():
    np.testing.assert_array_equal(project(EV_BOX, np.full(6, 0.5)), np.full(6, 0.5))
    np.testing.assert_array_equal(project(EV_BOX, [3, -2, 0, 0, 0, 0]), [2, -1, 0, 0, 0, 0])
    small = shrink(EV_BOX, 0.05)
    np.testing.assert_allclose(project(small, np.full(6, 2.0)), np.full(6, 1.9))


def test_project_keeps_type_and_checks_dimension():
    z = DecisionPoint(np.full(6, 5.0), 3, 3)
    out = project(EV_BOX, z)
    assert isinstance(out, DecisionPoint)
    np.testing.assert_array_equal(out.values, np.full(6, 2.0))
    with pytest.raises(DimensionError):
        project(EV_BOX, np.zeros(5))
    with pytest.raises(DimensionError):
        project(EV_BOX, DecisionPoint(np.zeros(6), 2, 4))


def test_project_batch():
    z = np.array([[3.0] * 6, [-3.0] * 6])
    np.testing.assert_array_equal(project(EV_BOX, z), [[2.0] * 6, [-1.0] * 6])


def test_shrink_examples():
    same = shrink(EV_BOX, 0.0)
    np.testing.assert_array_equal(same.lower, EV_BOX.lower)
    np.testing.assert_array_equal(same.upper, EV_BOX.upper)
    s = shrink(EV_BOX, 0.05)
    np.testing.assert_allclose(s.lower, -0.95)
    np.testing.assert_allclose(s.upper, 1.9)
    with pytest.raises(DegenerateBoxError):
        shrink(EV_BOX, 1.0)
    for bad in (-0.1, 1.5):
        with pytest.raises(ValueError):
            shrink(EV_BOX, bad)


def test_diameter_examples():
    assert diameter(EV_BOX) == pytest.approx(3 * np.sqrt(6), abs=1e-12)
    assert diameter(EV_BOX) == pytest.approx(7.34847, abs=1e-5)
    for k in (2, 5):
        unit = ProductBox(np.zeros(k), np.ones(k), 1, k - 1)
        assert diameter(unit) == pytest.approx(np.sqrt(k))


def test_inner_radius_examples():
    assert inner_radius(EV_BOX) == 1.0
    assert inner_radius(ProductBox.uniform(-3, 3, 1, 1)) == 3.0
    with pytest.raises(OriginNotInteriorError):
        inner_radius(ProductBox.uniform(0.5, 2, 1, 1))


def test_sample_uniform_in_box():
    pts = EV_BOX.sample_uniform(np.random.default_rng(0), 1000)
    assert pts.shape == (1000, 6)
    assert EV_BOX.contains(pts)


# -- properties ----------------------------------------------------------------

finite = st.floats(-50, 50, allow_nan=False)


@st.composite
def boxes(draw, origin_inside=False):
    n_x = draw(st.integers(1, 3))
    n_y = draw(st.integers(1, 3))
    n = n_x + n_y
    if origin_inside:
        lo = -draw(arrays(float, n, elements=st.floats(0.1, 10)))
        hi = draw(arrays(float, n, elements=st.floats(0.1, 10)))
    else:
        lo = draw(arrays(float, n, elements=st.floats(-10, 10)))
        hi = lo + draw(arrays(float, n, elements=st.floats(0.01, 10)))
    return ProductBox(lo, hi, n_x, n_y)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_projection_nonexpansive_and_idempotent(data):
    box = data.draw(boxes())
    z1 = data.draw(arrays(float, box.dim, elements=finite))
    z2 = data.draw(arrays(float, box.dim, elements=finite))
    p1, p2 = project(box, z1), project(box, z2)
    assert np.linalg.norm(p1 - p2) <= np.linalg.norm(z1 - z2) + 1e-12
    assert np.array_equal(project(box, p1), p1)
    assert box.contains(p1)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_shrink_contained_and_diameter_scales(data):
    box = data.draw(boxes(origin_inside=True))
    delta = data.draw(st.floats(0.0, 0.99))
    s = shrink(box, delta)
    assert np.all(s.lower >= box.lower) and np.all(s.upper <= box.upper)
    assert diameter(s) == pytest.approx((1 - delta) * diameter(box), rel=1e-12)
    assert inner_radius(s) == pytest.approx((1 - delta) * inner_radius(box), rel=1e-12)
