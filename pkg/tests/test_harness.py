import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornea_adi.errors import ConfigInvalid, EmptySelection
from cornea_adi.harness import (
    CSV_FIELDS,
    RunConfig,
    SampleResult,
    at_position,
    compute_rms,
    nearest_grid_correct,
    object_rates,
    parse_config,
    read_csv,
    results_to_csv_text,
    run_pipeline,
    run_study,
    summary_table,
    texture_density,
    timing_stats,
    x_range,
)
from cornea_adi.simulator import downscale


def res(err=None, target=(100.0, 0.0), failure="", scale=1.0, sid="s", timings=None):
    est = None if err is None else (target[0] + err[0], target[1] + err[1])
    return SampleResult(sid, "RECT", scale, target, est, "" if est else (failure or "EyeNotFound"), timings or {})


def test_rms_three_four_five():
    assert compute_rms([res((3.0, 4.0))]) == (5.0, 0.0, 1.0)


def test_rms_ignores_failures_in_error_but_counts_them_in_rate():
    rms, sd, rate = compute_rms([res((3.0, 4.0)), res(None)])
    assert (rms, sd, rate) == (5.0, 0.0, 0.5)
    rms, _, rate = compute_rms([res(None)])
    assert math.isnan(rms) and rate == 0.0


def test_empty_selection():
    with pytest.raises(EmptySelection):
        compute_rms([])
    with pytest.raises(EmptySelection):
        compute_rms([res((1.0, 0.0))], at_position(300, 100))


def test_position_slices():
    rs = [res((1.0, 0.0), (101.5, -1.2)), res((0.0, 2.0), (298.0, 99.0)), res((2.0, 0.0), (199.0, 0.5))]
    assert compute_rms(rs, at_position(100, 0))[0] == 1.0
    assert compute_rms(rs, x_range(100, 200))[0] == pytest.approx(math.sqrt(2.5))
    assert compute_rms(rs, x_range(300, 300))[0] == 2.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.booleans()), min_size=1, max_size=30), st.randoms())
def test_aggregates_are_order_independent(rows, rnd):
    rs = [res((x, y) if ok else None) for x, y, ok in rows]
    shuffled = rs[:]
    rnd.shuffle(shuffled)
    a, b = compute_rms(rs), compute_rms(shuffled)
    assert a[2] == b[2]
    for u, v in zip(a[:2], b[:2]):
        assert (math.isnan(u) and math.isnan(v)) or u == pytest.approx(v, rel=1e-12, abs=1e-12)


finite = st.floats(-1e4, 1e4, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(finite, finite, finite, finite, st.booleans(), st.floats(0, 1e3)), min_size=0, max_size=10))
def test_csv_round_trip_is_exact(rows):
    rs = []
    for i, (tx, ty, ex, ey, ok, t) in enumerate(rows):
        est = (ex, ey) if ok else None
        fail = "" if ok else "ObjectNotFound:device+pointer"
        rs.append(SampleResult(f"id{i}", "FINGER", 0.125, (tx, ty), est, fail, {"eye": t, "limbus": t / 3} if ok else {}))
    text = results_to_csv_text(rs)
    assert text.splitlines()[0] == ",".join(CSV_FIELDS)
    import io

    assert read_csv(io.StringIO(text)) == rs


def test_csv_requires_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(p)


def test_sample_result_invariants():
    with pytest.raises(ValueError):
        SampleResult("x", "RECT", 1.0, (0, 0), (1, 1), "EyeNotFound")
    with pytest.raises(ValueError):
        SampleResult("x", "RECT", 1.0, (0, 0), None, "")
    with pytest.raises(ValueError):
        SampleResult("x", "RECT", 1.0, (0, 0), (1, 1), "", {"eye": -1.0})
    r = res((3.0, -4.0), (201.0, -99.0))
    assert r.position == (200.0, -100.0) and r.err_mm == 5.0 and r.detected


def test_parse_config():
    cfg = parse_config(
        """
        mode = FINGER   # comment
        seed = 7
        scales = 1, 0.25
        k = 4
        timings = off
        device_dims = 60 110
        ransac_iterations = 100
        gate_min_saturation = 0.5
        cornea_radius = 7.7
        """
    )
    assert cfg.mode == "FINGER" and cfg.seed == 7 and cfg.scales == (1.0, 0.25)
    assert cfg.k_full == 4.0 and cfg.timings is False and cfg.dims == (60.0, 110.0)
    assert cfg.ransac.iterations == 100 and isinstance(cfg.ransac.iterations, int)
    assert cfg.gates.min_saturation == 0.5 and cfg.model.cornea_radius == 7.7
    assert cfg.pointer_mode == "Finger"


@pytest.mark.parametrize(
    "text",
    ["colour = red", "mode = CIRCLE", "scales = 2", "timings = maybe", "seed = x", "device_dims = 1", "normal_mode = up", "no equals sign"],
)
def test_bad_config(text):
    with pytest.raises(ConfigInvalid):
        parse_config(text)


def test_default_intrinsics_follow_image_width():
    cfg = RunConfig()
    full = cfg.intrinsics_for((1232, 1760, 3))
    eighth = cfg.intrinsics_for((154, 220, 3))
    assert full.focal_px == 27000.0 and eighth.focal_px == pytest.approx(27000.0 / 8)
    own = RunConfig(focal_px=1000.0).intrinsics_for((100, 200))
    assert (own.cx, own.cy) == (99.5, 49.5)


def test_texture_density():
    cfg = RunConfig()
    assert texture_density(cfg, 1000) == 3.0
    assert texture_density(cfg, 500) == 1.5
    assert texture_density(cfg, 125) == 0.75  # small regions get twice the density
    assert texture_density(cfg, 10) == 0.5


def test_blank_frame_fails_at_the_eye_stage():
    r = run_pipeline(np.zeros((120, 160, 3), np.uint8), RunConfig(), target=(0, 0))
    assert not r.detected and r.failure == "EyeNotFound"


def test_pipeline_on_rendered_frame(frontal_render):
    image, gt = frontal_render
    r = run_pipeline(image, RunConfig(dump_debug=True), target=gt.target)
    assert r.detected and r.err_mm < 5.0
    assert set(r.timings) == {"eye", "limbus", "unwrap", "scene"}
    assert {"region", "ellipse", "unwrapped", "device", "pointer"} <= set(r.debug)
    quiet = run_pipeline(image, RunConfig(timings=False), target=gt.target)
    assert quiet.timings == {} and quiet.estimate == r.estimate


def test_oracle_ellipse_bypasses_detection(frontal_render):
    image, gt = frontal_render
    small = downscale(image, 0.5)
    r = run_pipeline(small, RunConfig(), target=gt.target, scale=0.5, oracle_ellipse=gt.limbus.scaled(0.5))
    assert r.detected and r.err_mm < 5.0


def test_missing_pointer_reported(frontal_scene):
    from dataclasses import replace

    from cornea_adi.simulator import render

    image, gt = render(replace(frontal_scene, pointer="none"))
    r = run_pipeline(image, RunConfig(), target=(0, 0))
    assert r.failure == "ObjectNotFound:pointer"
    rates = object_rates([r, res((1.0, 1.0))])
    assert rates == {"device": 1.0, "pointer": 0.5, "frame": 0.5}


def test_grid_classification():
    rs = [res((10.0, -20.0)), res((26.0, 0.0)), res((0.0, -24.9)), res(None)]
    assert nearest_grid_correct(rs) == pytest.approx(2 / 3)
    with pytest.raises(EmptySelection):
        nearest_grid_correct([res(None)])


def test_timing_stats():
    t = {"eye": 10.0, "limbus": 2.0, "unwrap": 3.0, "scene": 5.0}
    ts = timing_stats([res((1, 1), timings=t), res((1, 1), timings={k: 2 * v for k, v in t.items()})])
    assert ts["eye"] == (15.0, 5.0) and ts["total"] == (30.0, 10.0)


def test_small_study_reproducible_and_ordered():
    cfg = RunConfig(participants=1, repetitions=1, scales=(1.0, 0.25), timings=False, seed=3)
    a = run_study(cfg)
    b = run_study(cfg)
    assert results_to_csv_text(a) == results_to_csv_text(b)
    assert [r.scale for r in a] == [1.0] * 9 + [0.25] * 9
    text = summary_table(a)
    assert "scale=1 " in text and "scale=0.25 " in text and "pos ( 300,  100)" in text
    both = run_study(cfg, oracle_variants=(False, True))
    assert results_to_csv_text(both[False]) == results_to_csv_text(a)
    assert len(both[True]) == 18 and len(both["render_ms"]) == 9
