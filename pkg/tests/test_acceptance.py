"""End-to-end acceptance checks on the synthetic protocol.

The full RECT study (360 samples, four scales) is rendered once per session
and shared between the detection and oracle-ellipse variants.
"""
import math

import numpy as np
import pytest

from cornea_adi.cli import main
from cornea_adi.eye_model import backproject_pixel
from cornea_adi.geometry import Ellipse2D, normalize
from cornea_adi.harness import (
    STAGES,
    RunConfig,
    at_position,
    at_scale,
    compute_rms,
    nearest_grid_correct,
    run_study,
)
from cornea_adi.limbus import RansacConfig, ransac_ellipse
from cornea_adi.simulator import STUDY_SCALES, SceneConfig, make_study_suite, render, trace_scene_points
from cornea_adi.unwrap import unwrap

from conftest import record
from test_limbus import noisy_ellipse_with_outliers


@pytest.fixture(scope="session")
def study():
    cfg = RunConfig(mode="RECT", scales=STUDY_SCALES, seed=0)
    out = run_study(cfg, oracle_variants=(False, True))
    return cfg, out


def _full(results):
    return [r for r in results if r.scale == 1.0]


def test_c01_geometry_oracle(study):
    _, out = study
    oracle = _full(out[True])
    rms, sd, rate = compute_rms(oracle)
    # rendering plus the oracle pipeline at full scale, one pass over the suite
    runtime_s = (sum(out["render_ms"]) + sum(sum(r.timings[s] for s in STAGES) for r in oracle)) / 1e3
    ok = len(oracle) == 360 and rms < 2.0 and rate == 1.0 and runtime_s < 300
    record(1, ok, f"oracle RMS {rms:.2f} mm (sd={sd:.2f}) < 2, detection {100 * rate:.2f}% = 100%, runtime {runtime_s:.0f} s < 300 s, n={len(oracle)}")
    assert ok


def test_c02_full_pipeline_full_scale(study):
    _, out = study
    rms, sd, rate = compute_rms(_full(out[False]))
    ok = rms <= 40.65 and rate >= 0.95
    record(2, ok, f"RMS {rms:.2f} mm (sd={sd:.2f}) <= 40.65, detection {100 * rate:.2f}% >= 95%")
    assert ok


def test_c03_near_field_slice(study):
    _, out = study
    rms, sd, rate = compute_rms(_full(out[False]), at_position(100, 0))
    ok = rms <= 16.38
    record(3, ok, f"x=100,y=0 RMS {rms:.2f} mm (sd={sd:.2f}) <= 16.38, detection {100 * rate:.2f}%")
    assert ok


def test_c04_resolution_trend(study):
    cfg, out = study
    stats = [compute_rms(out[False], at_scale(s)) for s in cfg.scales]
    rms = [s[0] for s in stats]
    rate = [s[2] for s in stats]
    rate_ok = all(b <= a for a, b in zip(rate, rate[1:]))
    # RMS at a smaller scale may undercut a larger one by at most 10%
    rms_ok = all(rms[j] >= 0.9 * rms[i] for i in range(len(rms)) for j in range(i + 1, len(rms)))
    ok = rate_ok and rms_ok
    detail = "detection " + "/".join(f"{100 * q:.2f}" for q in rate) + "% non-increasing: " + ("yes" if rate_ok else "no")
    detail += "; RMS " + "/".join(f"{x:.2f}" for x in rms) + " mm non-decreasing within 10%: " + ("yes" if rms_ok else "no")
    record(4, ok, detail)
    assert rate_ok, detail
    assert rms_ok, detail


def test_c05_error_grows_with_x(study):
    _, out = study
    full = [r for r in _full(out[False]) if r.detected]
    e100 = np.mean([r.err_mm for r in full if r.position[0] == 100])
    e300 = np.mean([r.err_mm for r in full if r.position[0] == 300])
    ok = e300 > e100
    record(5, ok, f"mean error x=300 {e300:.2f} mm > x=100 {e100:.2f} mm")
    assert ok


def test_c06_unwrap_round_trip():
    suite = make_study_suite("RECT", participants=10, repetitions=4, seed=0)
    rng = np.random.default_rng(6)
    agree, total, errs, hit_share = 0, 0, [], []
    for i in rng.choice(len(suite), 20, replace=False):
        scene = suite[i].scene
        image, gt = render(scene)
        uw = unwrap(image, scene.intrinsics, gt.pose, scene.model, 3.0)
        vs, us = np.nonzero(uw.valid_mask)
        n = uw.normals(us, vs)
        src = scene.intrinsics.project(gt.pose.cornea_sphere.center + scene.model.cornea_radius * n)
        truth, seen = trace_scene_points(scene, src[:, 0], src[:, 1])
        O, D = uw.ray_origin[vs, us], uw.ray_dir[vs, us]
        plane = scene.plane()
        den = D @ plane.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((plane.point - O) @ plane.normal) / den
        hits = (np.abs(den) > 1e-12) & (t >= 0)
        p = O + t[:, None] * D
        both = hits & seen
        e = np.full(len(us), np.inf)
        e[both] = np.linalg.norm(p[both] - truth[both], axis=1)
        # a pixel reproduces its scene point, or agrees that none exists
        agree += int(np.sum((both & (e <= 5.0)) | (~hits & ~seen)))
        total += len(us)
        errs.append(e[both])
        hit_share.append(both.mean())
    errs = np.concatenate(errs)
    frac = agree / total
    med, p95 = np.median(errs), np.percentile(errs, 95)
    ok = frac >= 0.99 and med <= 1.0 and p95 <= 5.0
    record(
        6,
        ok,
        f"{100 * frac:.2f}% of valid pixels reproduced (>= 99%), median {med:.2e} mm <= 1, p95 {p95:.2e} mm <= 5; "
        f"pixels with a plane point {100 * min(hit_share):.1f}..{100 * max(hit_share):.1f}%",
    )
    assert ok


def test_c07_ransac_property_suite():
    good = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        a = rng.uniform(30, 150)
        truth = Ellipse2D(tuple(rng.uniform(-200, 200, 2)), a, a * rng.uniform(0.5, 1.0), rng.uniform(0, math.pi))
        pts = noisy_ellipse_with_outliers(rng, truth, n_in=200, outlier_share=0.3)
        try:
            e, _ = ransac_ellipse(pts, RansacConfig(seed=trial))
        except Exception:
            continue
        good += abs(e.a - truth.a) / truth.a <= 0.05 and abs(e.b - truth.b) / truth.b <= 0.05
    rng = np.random.default_rng(12345)
    pts = noisy_ellipse_with_outliers(rng, Ellipse2D((0, 0), 80, 50, 0.4))
    runs = [ransac_ellipse(pts, RansacConfig(seed=9)) for _ in range(3)]
    exact = all(r[0] == runs[0][0] and r[1] == runs[0][1] for r in runs)
    ok = good >= 95 and exact
    record(7, ok, f"{good}/100 trials with axes within 5% (>= 95), repeated seeded fits bit-identical: {exact}")
    assert ok


def _apex_arc_deg(scene):
    pose, K, m = scene.pose(), scene.intrinsics, scene.model
    u, v = K.project(pose.cornea_sphere.center + m.cornea_radius * pose.gaze)
    p0, _ = backproject_pixel((u, v), K, pose, m)
    p1, _ = backproject_pixel((u + 1.0, v), K, pose, m)
    c = pose.cornea_sphere.center
    return math.degrees(math.acos(np.clip(normalize(p0 - c) @ normalize(p1 - c), -1, 1)))


def test_c08_angular_resolution():
    base = SceneConfig()
    full = _apex_arc_deg(base)
    eighth = _apex_arc_deg(SceneConfig(intrinsics=base.intrinsics.scaled(0.125)))
    ok = 0.12 / 1.5 <= full <= 0.12 * 1.5 and 1.0 / 1.5 <= eighth <= 1.5
    record(8, ok, f"apex pixel arc {full:.3f} deg (~0.12) at full scale, {eighth:.3f} deg (~1) at 0.125")
    assert ok


def test_c09_five_cm_separability(study):
    _, out = study
    sel = [r for r in _full(out[False]) if r.position[0] <= 200 and abs(r.position[1]) <= 100]
    frac = nearest_grid_correct(sel, spacing=50.0)
    ok = frac >= 0.90
    record(9, ok, f"{100 * frac:.2f}% of {len(sel)} estimates nearest their own node on a 50 mm grid (>= 90%)")
    assert ok


def test_c10_reproducible_study_csv(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("participants = 2\nrepetitions = 1\ntimings = off\n")
    args = ["study", "--config", str(cfg), "--scales", "1,0.25,0.125", "--seed", "11"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    b = (tmp_path / "b" / "results.csv").read_bytes()
    ok = a == b and len(a.splitlines()) == 1 + 2 * 9 * 3
    record(10, ok, f"two study runs with the same config and seed: byte-identical CSV ({len(a)} bytes): {a == b}")
    assert ok
