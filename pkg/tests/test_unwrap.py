import numpy as np
import pytest

from cornea_adi.eye_model import backproject_pixel
from cornea_adi.geometry import intersect_ray_plane
from cornea_adi.simulator import trace_scene_points
from cornea_adi.unwrap import source_pixel, unwrap, unwrapped_to_ray


@pytest.fixture(scope="module")
def uw_frontal(frontal_render, frontal_scene):
    image, gt = frontal_render
    return unwrap(image, frontal_scene.intrinsics, gt.pose, frontal_scene.model, k=3.0)


def test_density_floor(frontal_render, frontal_scene):
    image, gt = frontal_render
    with pytest.raises(ValueError):
        unwrap(image, frontal_scene.intrinsics, gt.pose, frontal_scene.model, k=0.4)


def test_window_geometry(uw_frontal):
    uw = uw_frontal
    assert uw.canvas_shape == (540, 1080)
    h, w = uw.shape
    u, v = uw.pixel_of(0.0, 0.0)  # apex
    assert u == pytest.approx((w - 1) / 2, abs=1.0) and v == pytest.approx((h - 1) / 2, abs=1.0)
    lon, lat = uw.lonlat(np.array([3.0, 17.5]), np.array([40.0, 2.0]))
    assert np.allclose(uw.pixel_of(lon, lat), [[3.0, 17.5], [40.0, 2.0]])
    full = uw.full_canvas()
    c0, r0 = uw.offset
    assert full.shape == (540, 1080, 3)
    assert np.array_equal(full[r0 : r0 + h, c0 : c0 + w], uw.texture)


def test_valid_region_is_the_cap(uw_frontal):
    uw = uw_frontal
    n = uw.normals(*np.meshgrid(np.arange(uw.shape[1]), np.arange(uw.shape[0])))
    on_cap = n @ uw.pose.gaze >= uw.model.cap_cos - 1e-12
    assert np.all(on_cap[uw.valid_mask])
    assert uw.valid_mask.sum() > 0.95 * on_cap.sum()
    assert np.all(uw.texture[~uw.valid_mask] == 0)


def test_stored_ray_matches_image_backprojection(uw_frontal):
    uw = uw_frontal
    vs, us = np.nonzero(uw.valid_mask)
    for i in np.linspace(0, len(us) - 1, 25).astype(int):
        px = (int(us[i]), int(vs[i]))
        ray = unwrapped_to_ray(uw, px)
        p, ref = backproject_pixel(source_pixel(uw, px), uw.intrinsics, uw.pose, uw.model)
        assert np.allclose(ray.origin, p, atol=1e-9)
        assert np.allclose(ray.direction, ref.direction, atol=1e-9)


def test_fractional_pixels_interpolate_continuously(uw_frontal):
    uw = uw_frontal
    h, w = uw.shape
    a = unwrapped_to_ray(uw, (w // 2, h // 2))
    b = unwrapped_to_ray(uw, (w // 2 + 1e-7, h // 2))
    assert np.allclose(a.direction, b.direction, atol=1e-6)


def test_out_of_range_and_invalid_pixels(uw_frontal):
    uw = uw_frontal
    h, w = uw.shape
    with pytest.raises(IndexError):
        unwrapped_to_ray(uw, (w, 0))
    with pytest.raises(IndexError):
        unwrapped_to_ray(uw, (0, -0.6))
    assert unwrapped_to_ray(uw, (0, 0)) is None


def test_round_trip_onto_scene_plane(uw_frontal, frontal_scene):
    uw = uw_frontal
    vs, us = np.nonzero(uw.valid_mask)
    sel = np.arange(0, len(us), 7)
    src = np.array([source_pixel(uw, (us[i], vs[i])) for i in sel])
    truth, ok = trace_scene_points(frontal_scene, src[:, 0], src[:, 1])
    plane = frontal_scene.plane()
    err = []
    for j, i in enumerate(sel):
        hit = intersect_ray_plane(unwrapped_to_ray(uw, (us[i], vs[i])), plane)
        if ok[j] and hit is not None:
            err.append(np.linalg.norm(hit[1] - truth[j]))
    err = np.array(err)
    assert len(err) > 0.98 * len(sel)
    assert np.median(err) < 1e-6 and np.percentile(err, 95) < 1e-4


def test_sample_reads_source_image(uw_frontal):
    uw = uw_frontal
    vs, us = np.nonzero(uw.valid_mask)
    got = uw.sample(us[:50], vs[:50])
    assert np.allclose(got, uw.texture[vs[:50], us[:50]], atol=0.5)
    assert np.all(uw.sample(np.array([0.0]), np.array([0.0])) == 0)
