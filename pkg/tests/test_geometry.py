import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sidsphere.geometry import (
    DimensionError,
    SpherePoint,
    TangentVector,
    coordinate_surface_gradient,
    exp_map,
    geodesic_distance,
    project_to_tangent,
    uniform_points,
)

e0 = SpherePoint([1.0, 0.0])
e1 = SpherePoint([0.0, 1.0])
diag = SpherePoint(np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0))


def test_projection_of_radial_vector_is_zero():
    assert np.allclose(project_to_tangent(e0, [1.0, 0.0]).components, 0.0, atol=1e-15)


def test_projection_keeps_tangent_vector():
    assert np.allclose(project_to_tangent(e0, [0.0, 1.0]).components, [0.0, 1.0])


def test_projection_hand_value():
    w = project_to_tangent(diag, [1.0, 0.0, 0.0])
    assert np.allclose(w.components, [0.5, -0.5, 0.0], atol=1e-15)


def test_projection_dimension_mismatch():
    with pytest.raises(DimensionError):
        project_to_tangent(e0, [1.0, 0.0, 0.0])


def test_exp_map_quarter_circle_and_antipode():
    assert np.allclose(exp_map(e0, TangentVector(e0, [0.0, math.pi / 2])).coords, [0.0, 1.0], atol=1e-15)
    assert np.allclose(exp_map(e0, TangentVector(e0, [0.0, math.pi])).coords, [-1.0, 0.0], atol=1e-15)


def test_exp_map_zero_is_identity():
    assert exp_map(e0, TangentVector(e0, [0.0, 0.0])) == e0


def test_exp_map_small_step_branch_matches_trig():
    x = SpherePoint([0.6, 0.8, 0.0])
    w = project_to_tangent(x, [0.0, 0.0, 3e-8])
    y = exp_map(x, w)
    s = w.norm()
    expect = math.cos(s) * x.coords + math.sin(s) / s * w.components
    assert np.allclose(y.coords, expect, atol=1e-16)


def test_surface_gradient_examples():
    assert np.allclose(coordinate_surface_gradient(e0, 0).components, 0.0)
    assert np.allclose(coordinate_surface_gradient(e1, 0).components, [1.0, 0.0])
    assert np.allclose(coordinate_surface_gradient(diag, 0).components, [0.5, -0.5, 0.0], atol=1e-15)
    with pytest.raises(IndexError):
        coordinate_surface_gradient(e0, 2)


def test_tangent_vector_rejects_radial_component():
    with pytest.raises(ValueError):
        TangentVector(e0, [1.0, 0.0])


def test_uniform_points_are_unit():
    pts = uniform_points(np.random.default_rng(1), 500, 4)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-14)


vectors = st.integers(2, 6).flatmap(
    lambda d: st.tuples(
        arrays(np.float64, d, elements=st.floats(-10, 10)),
        arrays(np.float64, d, elements=st.floats(-10, 10)),
    )
)


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_projection_is_idempotent_and_tangent(pair):
    a, u = pair
    if np.linalg.norm(a) < 1e-3:
        return
    x = SpherePoint.from_ambient(a)
    w = project_to_tangent(x, u).components
    assert abs(np.dot(w, x.coords)) <= 1e-10 * (1 + np.linalg.norm(u))
    assert np.allclose(project_to_tangent(x, w).components, w, atol=1e-12 * (1 + np.linalg.norm(u)))


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(0.0, 3.0))
def test_exp_map_stays_on_sphere_and_travels_arc_length(pair, length):
    a, u = pair
    if np.linalg.norm(a) < 1e-3:
        return
    x = SpherePoint.from_ambient(a)
    w = project_to_tangent(x, u)
    if w.norm() < 1e-6:
        return
    w = w * (length / w.norm())
    y = exp_map(x, w)
    assert abs(np.linalg.norm(y.coords) - 1.0) <= 1e-12
    assert geodesic_distance(x, y) == pytest.approx(length, abs=1e-7)
