import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornea_adi.errors import DegenerateInput
from cornea_adi.geometry import (
    Ellipse2D,
    Plane3D,
    Ray,
    Sphere,
    conic_to_ellipse,
    ellipse_from_points,
    fit_conic,
    intersect_ray_plane,
    intersect_ray_sphere,
    rays_sphere_hits,
    reflect,
    rotate,
)


def test_ray_direction_is_normalised():
    r = Ray((0, 0, 0), (0, 0, 5))
    assert np.allclose(r.direction, [0, 0, 1])
    assert np.allclose(r.at(2.0), [0, 0, 2])


def test_zero_direction_rejected():
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (0, 0, 0))


def test_sphere_hit_front_surface():
    t, p = intersect_ray_sphere(Ray((0, 0, 0), (0, 0, 1)), Sphere((0, 0, 10), 2))
    assert t == pytest.approx(8.0)
    assert np.allclose(p, [0, 0, 8])


def test_sphere_hit_from_inside_and_miss():
    t, _ = intersect_ray_sphere(Ray((0, 0, 10), (0, 0, 1)), Sphere((0, 0, 10), 2))
    assert t == pytest.approx(2.0)
    assert intersect_ray_sphere(Ray((0, 0, 0), (1, 0, 0)), Sphere((0, 0, 10), 2)) is None
    assert intersect_ray_sphere(Ray((0, 0, 20), (0, 0, 1)), Sphere((0, 0, 10), 2)) is None


def test_vectorised_sphere_hits_match_scalar():
    rng = np.random.default_rng(1)
    dirs = rng.normal(size=(50, 3)) * [0.1, 0.1, 1]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    c, r = np.array([0.5, -0.2, 10.0]), 1.5
    t = rays_sphere_hits(np.zeros((50, 3)), dirs, c, r)
    for d, ti in zip(dirs, t):
        hit = intersect_ray_sphere(Ray((0, 0, 0), d), Sphere(c, r))
        assert (hit is None and np.isnan(ti)) or hit[0] == pytest.approx(ti)


def test_plane_intersection():
    plane = Plane3D((0, 0, 10), (0, 0, -1))
    t, p = intersect_ray_plane(Ray((1, 2, 0), (0, 0, 1)), plane)
    assert t == pytest.approx(10.0)
    assert np.allclose(p, [1, 2, 10])
    assert intersect_ray_plane(Ray((0, 0, 0), (0, 0, -1)), plane) is None
    assert intersect_ray_plane(Ray((0, 0, 0), (1, 0, 0)), plane) is None


def test_reflect_mirror():
    assert np.allclose(reflect([1, -1, 0], [0, 1, 0]), [1, 1, 0])
    # row-wise
    out = reflect(np.array([[0, 0, 1], [1, 0, 0]]), np.array([[0, 0, -1], [0, 0, 1]]))
    assert np.allclose(out, [[0, 0, -1], [1, 0, 0]])


@given(st.floats(-math.pi, math.pi), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_rotate_preserves_length(angle, v):
    v = np.array(v)
    assert np.linalg.norm(rotate(v, (0.3, -1.0, 0.5), angle)) == pytest.approx(np.linalg.norm(v), abs=1e-9)


def test_rotate_quarter_turn():
    assert np.allclose(rotate((1, 0, 0), (0, 0, 1), math.pi / 2), [0, 1, 0])


def test_ellipse_normalises_axes_and_angle():
    e = Ellipse2D((0, 0), 2.0, 5.0, 0.0)
    assert (e.a, e.b) == (5.0, 2.0)
    assert e.rotation == pytest.approx(math.pi / 2)
    assert 0 <= Ellipse2D((0, 0), 5, 2, -0.3).rotation < math.pi
    with pytest.raises(ValueError):
        Ellipse2D((0, 0), 0.0, 1.0, 0.0)


def test_ellipse_points_satisfy_conic():
    e = Ellipse2D((10, -4), 7.0, 3.0, 0.6)
    pts = e.points(40)
    A, B, C, D, E, F = e.conic()
    x, y = pts[:, 0], pts[:, 1]
    assert np.allclose(A * x * x + B * x * y + C * y * y + D * x + E * y + F, 0, atol=1e-12)
    assert np.all(e.contains(np.array([[10, -4]])))
    assert not np.any(e.contains(np.array([[30, 30]])))


def test_sampson_distance_near_axis_ends():
    e = Ellipse2D((0, 0), 10.0, 5.0, 0.0)
    d = e.distance(np.array([[10.2, 0.0], [0.0, 5.1]]))
    assert np.allclose(d, [0.2, 0.1], rtol=0.05)


def test_scaled_ellipse_pixel_centre_convention():
    e = Ellipse2D((9.5, 19.5), 8, 4, 0.2).scaled(0.5)
    assert e.center == pytest.approx((4.5, 9.5))
    assert (e.a, e.b) == (4.0, 2.0)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-100, 100),
    st.floats(-100, 100),
    st.floats(5, 200),
    st.floats(0.3, 1.0),
    st.floats(0, math.pi),
)
def test_fit_recovers_exact_ellipse(u, v, a, ratio, rot):
    truth = Ellipse2D((u, v), a, a * ratio, rot)
    got = ellipse_from_points(truth.points(12, phase=0.1))
    assert got.center == pytest.approx(truth.center, abs=1e-6 * a)
    assert got.a == pytest.approx(truth.a, rel=1e-6)
    assert got.b == pytest.approx(truth.b, rel=1e-6)
    if ratio < 0.99:
        dphi = abs(got.rotation - truth.rotation) % math.pi
        assert min(dphi, math.pi - dphi) < 1e-5


def test_fit_rejects_degenerate_sets():
    with pytest.raises(DegenerateInput):
        fit_conic(np.zeros((4, 2)))
    with pytest.raises(DegenerateInput):
        fit_conic(np.column_stack([np.arange(10.0), 2 * np.arange(10.0)]))
    with pytest.raises(DegenerateInput):
        conic_to_ellipse([1, 0, -1, 0, 0, -1])  # hyperbola
