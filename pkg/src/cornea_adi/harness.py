"""Pipeline orchestration, the synthetic study protocol and its metrics."""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigInvalid, EmptySelection, ObjectNotFound, PipelineError
from .eye_model import CameraIntrinsics, EyeModel, pose_from_limbus
from .geometry import Ellipse2D
from .limbus import RansacConfig, detect_limbus, locate_eye_region
from .reconstruction import locate_pointer_on_plane, solve_device_plane
from .scene import DEFAULT_GATES, Gates, detect_device, detect_pointer
from .simulator import DEVICE_DIMS, STUDY_GRID, STUDY_SCALES, default_intrinsics, downscale, make_study_suite, render
from .unwrap import unwrap, unwrapped_to_ray

log = logging.getLogger(__name__)

CSV_FIELDS = (
    "sample_id",
    "mode",
    "scale",
    "target_x_mm",
    "target_y_mm",
    "est_x_mm",
    "est_y_mm",
    "err_x_mm",
    "err_y_mm",
    "err_mm",
    "failure",
    "t_eye_ms",
    "t_limbus_ms",
    "t_unwrap_ms",
    "t_scene_ms",
)
STAGES = ("eye", "limbus", "unwrap", "scene")
REFERENCE_SIDE = 1000.0  # eye-region side (px) at which k_full applies


@dataclass(frozen=True)
class RunConfig:
    mode: str = "RECT"
    scales: tuple = STUDY_SCALES
    seed: int = 0
    model: EyeModel = field(default_factory=EyeModel)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    gates: Gates = DEFAULT_GATES
    k_full: float = 3.0  # texture px per degree at a 1000 px eye region
    upsample_side: float = 150.0  # regions at most this wide get a x2 texture
    normal_mode: str = "reflection"
    device_dims: tuple | None = None
    participants: int = 10
    repetitions: int = 4
    oracle_ellipse: bool = False
    timings: bool = True
    workers: int = 1
    out_dir: str = "out"
    dump_debug: bool = False
    focal_px: float | None = None
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        if self.mode not in DEVICE_DIMS:
            raise ConfigInvalid(f"mode must be one of {sorted(DEVICE_DIMS)}")
        if not self.scales:
            raise ConfigInvalid("at least one scale factor is required")
        if any(not (0 < s <= 1) for s in self.scales):
            raise ConfigInvalid("scale factors must lie in (0, 1]")
        if self.normal_mode not in ("reflection", "gaze"):
            raise ConfigInvalid("normal_mode must be reflection or gaze")
        if not self.k_full > 0:
            raise ConfigInvalid("k must be positive")

    @property
    def dims(self) -> tuple:
        return tuple(self.device_dims) if self.device_dims is not None else DEVICE_DIMS[self.mode]

    @property
    def pointer_mode(self) -> str:
        return "Marker" if self.mode == "RECT" else "Finger"

    def intrinsics_for(self, image_shape) -> CameraIntrinsics:
        h, w = image_shape[:2]
        if self.focal_px is None:
            base = default_intrinsics()
            return base.scaled(w / base.width)
        cx = (w - 1) / 2.0 if self.cx is None else self.cx
        cy = (h - 1) / 2.0 if self.cy is None else self.cy
        return CameraIntrinsics(self.focal_px, cx, cy, w, h)


# key = value configuration files

_SIMPLE = {
    "mode": str,
    "seed": int,
    "k": float,
    "upsample_side": float,
    "normal_mode": str,
    "participants": int,
    "repetitions": int,
    "workers": int,
    "out_dir": str,
    "focal_px": float,
    "cx": float,
    "cy": float,
}
_BOOL = ("oracle_ellipse", "timings", "dump_debug")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on", "wall"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigInvalid(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigInvalid(f"not a list of numbers: {text!r}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines ('#' comments) into a RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigInvalid(str(exc)) from None
    base = base or RunConfig()
    kw, ransac, gates, model = {}, {}, {}, {}
    gate_fields = {f.name: f for f in fields(Gates)}
    ransac_fields = {f.name: f for f in fields(RansacConfig)}
    for key, val in cp["run"].items():
        try:
            if key in _SIMPLE:
                kw["k_full" if key == "k" else key] = _SIMPLE[key](val)
            elif key in _BOOL:
                kw[key] = _bool(val)
            elif key == "scales":
                kw["scales"] = _floats(val)
            elif key == "device_dims":
                kw["device_dims"] = _floats(val)
            elif key in ("cornea_radius", "limbus_radius"):
                model[key] = float(val)
            elif key.startswith("ransac_") and key[7:] in ransac_fields:
                ransac[key[7:]] = type(getattr(RansacConfig(), key[7:]))(float(val))
            elif key.startswith("gate_") and key[5:] in gate_fields:
                cur = getattr(DEFAULT_GATES, key[5:])
                gates[key[5:]] = _floats(val) if isinstance(cur, tuple) else type(cur)(float(val))
            else:
                raise ConfigInvalid(f"unknown configuration key {key!r}")
        except ValueError as exc:
            raise ConfigInvalid(f"{key}: {exc}") from None
    if model:
        kw["model"] = replace(base.model, **model)
    if ransac:
        kw["ransac"] = replace(base.ransac, **ransac)
    if gates:
        kw["gates"] = replace(base.gates, **gates)
    if "device_dims" in kw and len(kw["device_dims"]) != 2:
        raise ConfigInvalid("device_dims needs width and height")
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


# per-sample results


@dataclass
class SampleResult:
    sample_id: str
    mode: str
    scale: float
    target: tuple
    estimate: tuple | None
    failure: str = ""
    timings: dict = field(default_factory=dict)  # stage -> ms, absent when not recorded
    debug: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if (self.estimate is None) == (self.failure == ""):
            raise ValueError("exactly one of estimate and failure must be set")
        if any(v < 0 for v in self.timings.values()):
            raise ValueError("negative stage timing")

    @property
    def detected(self) -> bool:
        return self.estimate is not None

    @property
    def error(self):
        if self.estimate is None:
            return None
        return (self.estimate[0] - self.target[0], self.estimate[1] - self.target[1])

    @property
    def err_mm(self) -> float:
        e = self.error
        return float("nan") if e is None else math.hypot(*e)

    @property
    def position(self) -> tuple:
        """Nominal grid position (target rounded to the 100 mm study grid)."""
        return tuple(float(round(t / 100.0) * 100.0) for t in self.target)


class _Stopwatch:
    def __init__(self, enabled=True):
        self.enabled = enabled
        self.times = {}

    def __call__(self, stage):
        sw = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                if sw.enabled:
                    sw.times[stage] = sw.times.get(stage, 0.0) + 1e3 * (time.perf_counter() - self.t0)
                return False

        return _Ctx()


def texture_density(cfg: RunConfig, side: float) -> float:
    k = cfg.k_full * side / REFERENCE_SIDE
    if side <= cfg.upsample_side:
        k *= 2.0  # small regions are enlarged before scene analysis
    return max(k, 0.5)


def run_pipeline(
    image: np.ndarray,
    cfg: RunConfig,
    intrinsics: CameraIntrinsics | None = None,
    *,
    sample_id: str = "",
    scale: float = 1.0,
    target=(float("nan"), float("nan")),
    oracle_ellipse: Ellipse2D | None = None,
) -> SampleResult:
    """Full inverse pipeline on one frame; stage failures become ``failure``."""
    intr = intrinsics or cfg.intrinsics_for(image.shape)
    sw = _Stopwatch(cfg.timings)
    debug = {} if cfg.dump_debug else None
    estimate, failure = None, ""
    try:
        with sw("eye"):
            region = locate_eye_region(image)
        with sw("limbus"):
            if oracle_ellipse is not None:
                ellipse = oracle_ellipse
            else:
                ellipse, _ = detect_limbus(region, cfg.ransac)
            pose = pose_from_limbus(ellipse, intr, cfg.model)
        if debug is not None:
            debug.update(region=region, ellipse=ellipse)
        with sw("unwrap"):
            uw = unwrap(image, intr, pose, cfg.model, texture_density(cfg, region.side))
        if debug is not None:
            debug["unwrapped"] = uw
        with sw("scene"):
            device, pointer, missing = None, None, []
            try:
                device = detect_device(uw, cfg.mode, cfg.dims, cfg.gates)
            except ObjectNotFound:
                missing.append("device")
            try:
                pointer = detect_pointer(uw, cfg.pointer_mode, device, cfg.gates)
            except ObjectNotFound:
                missing.append("pointer")
            if debug is not None:
                debug.update(device=device, pointer=pointer)
            if missing:
                raise ObjectNotFound("scene analysis failed", objects=tuple(missing))
            plane = solve_device_plane(device, uw, cfg.dims, cfg.normal_mode)
            ray = unwrapped_to_ray(uw, pointer.center)
            if ray is None:
                raise ObjectNotFound("pointer outside the corneal cap", objects=("pointer",))
            pc = locate_pointer_on_plane(plane, ray)
            estimate = (pc.x, pc.y)
    except PipelineError as exc:
        failure = exc.reason
    return SampleResult(
        sample_id,
        cfg.mode,
        float(scale),
        (float(target[0]), float(target[1])),
        estimate,
        failure,
        dict(sw.times),
        debug,
    )


# study protocol


def study_suite(cfg: RunConfig):
    return make_study_suite(cfg.mode, participants=cfg.participants, repetitions=cfg.repetitions, seed=cfg.seed)


def evaluate_sample(sample, cfg: RunConfig, oracle_variants=(False,), debug_dir=None):
    """Render one study sample once and run it at every scale and variant.

    Returns a dict mapping each oracle flag to a list of SampleResult, plus
    the render time under key ``"render_ms"``. Debug overlays, if requested,
    are written to ``debug_dir`` straight away and not kept in the results.
    """
    t0 = time.perf_counter()
    image, gt = render(sample.scene)
    out = {"render_ms": 1e3 * (time.perf_counter() - t0)}
    base_intr = sample.scene.intrinsics
    for oracle in oracle_variants:
        out[oracle] = []
    for s in cfg.scales:
        img_s = image if s == 1.0 else downscale(image, s)
        intr = base_intr if s == 1.0 else base_intr.scaled(s)
        for oracle in oracle_variants:
            res = run_pipeline(
                img_s,
                cfg,
                intr,
                sample_id=sample.sample_id,
                scale=s,
                target=sample.scene.target,
                oracle_ellipse=gt.limbus.scaled(s) if oracle else None,
            )
            if res.debug is not None and debug_dir is not None:
                from .plotting import write_debug_overlays

                write_debug_overlays(res, debug_dir, f"{res.sample_id}_s{s:g}{'_oracle' if oracle else ''}")
            res.debug = None
            out[oracle].append(res)
    return out


def run_study(cfg: RunConfig, suite=None, oracle_variants=None, debug_dir=None):
    """Run the synthetic protocol; results ordered by scale, then sample.

    With ``oracle_variants`` (e.g. ``(False, True)``) both detection and
    oracle-ellipse results are produced from the same renders and a dict keyed
    by the flag is returned instead of a list.
    """
    suite = study_suite(cfg) if suite is None else suite
    variants = (cfg.oracle_ellipse,) if oracle_variants is None else tuple(oracle_variants)
    if cfg.workers > 1:
        from joblib import Parallel, delayed

        per_sample = Parallel(n_jobs=cfg.workers)(delayed(evaluate_sample)(s, cfg, variants, debug_dir) for s in suite)
    else:
        per_sample = [evaluate_sample(s, cfg, variants, debug_dir) for s in suite]
    out = {}
    for v in variants:
        rows = [r for ps in per_sample for r in ps[v]]
        order = {s: i for i, s in enumerate(cfg.scales)}
        # deterministic reduce: stable sort by scale keeps suite order within a scale
        out[v] = sorted(rows, key=lambda r: order[r.scale])
    out["render_ms"] = [ps["render_ms"] for ps in per_sample]
    if oracle_variants is None:
        return out[variants[0]]
    return out


# metrics


def compute_rms(results, predicate=None):
    """(rms, sd, rate): RMS and population sd of the Euclidean error over
    detected samples, and the detected fraction of the selection."""
    sel = [r for r in results if predicate is None or predicate(r)]
    if not sel:
        raise EmptySelection("no samples match the selection")
    errs = np.array([r.err_mm for r in sel if r.detected])
    rate = len(errs) / len(sel)
    if errs.size == 0:
        return float("nan"), float("nan"), rate
    return float(np.sqrt(np.mean(errs**2))), float(np.std(errs)), rate


def component_rms(results, predicate=None):
    sel = [r for r in results if (predicate is None or predicate(r)) and r.detected]
    if not sel:
        return float("nan"), float("nan")
    e = np.array([r.error for r in sel])
    return float(np.sqrt(np.mean(e[:, 0] ** 2))), float(np.sqrt(np.mean(e[:, 1] ** 2)))


def at_position(x, y):
    return lambda r: r.position == (float(x), float(y))


def x_range(lo, hi):
    return lambda r: lo <= r.position[0] <= hi


def at_scale(s):
    return lambda r: r.scale == s


def both(*preds):
    return lambda r: all(p(r) for p in preds)


def object_rates(results):
    """Per-object detection rates (a frame detected only if both objects are)."""
    n = len(results)
    if n == 0:
        raise EmptySelection("no samples")
    scene_stage = [r for r in results if r.detected or r.failure.startswith("ObjectNotFound")]
    dev = sum(1 for r in scene_stage if "device" not in r.failure.split(":")[-1].split("+"))
    ptr = sum(1 for r in scene_stage if "pointer" not in r.failure.split(":")[-1].split("+"))
    return {"device": dev / n, "pointer": ptr / n, "frame": sum(r.detected for r in results) / n}


def nearest_grid_correct(results, spacing: float = 50.0):
    """Fraction of detected estimates whose nearest point on a ``spacing`` grid
    through the nominal positions is their own nominal position."""
    det = [r for r in results if r.detected]
    if not det:
        raise EmptySelection("no detected samples")
    ok = 0
    for r in det:
        px, py = r.position
        ex, ey = r.estimate
        ok += round((ex - px) / spacing) == 0 and round((ey - py) / spacing) == 0
    return ok / len(det)


def timing_stats(results):
    out = {}
    for st in STAGES:
        v = np.array([r.timings[st] for r in results if st in r.timings])
        out[st] = (float(v.mean()), float(v.std())) if v.size else (float("nan"), float("nan"))
    tot = np.array([sum(r.timings.values()) for r in results if r.detected and len(r.timings) == len(STAGES)])
    out["total"] = (float(tot.mean()), float(tot.std())) if tot.size else (float("nan"), float("nan"))
    return out


def summary_table(results) -> str:
    """Plain-text table: one block per mode and scale."""
    lines = []
    modes = sorted({r.mode for r in results})
    scales = sorted({r.scale for r in results}, reverse=True)
    for m in modes:
        for s in scales:
            sel = [r for r in results if r.mode == m and r.scale == s]
            if not sel:
                continue
            rms, sd, rate = compute_rms(sel)
            rx, ry = component_rms(sel)
            lines.append(f"mode={m} scale={s:g} n={len(sel)} detection={100 * rate:.2f}%")
            lines.append(f"  overall RMS {rms:.2f} mm (sd={sd:.2f})  x {rx:.2f} mm  y {ry:.2f} mm")
            for lo, hi in ((100, 100), (100, 200), (300, 300)):
                try:
                    r_, s_, q_ = compute_rms(sel, x_range(lo, hi))
                except EmptySelection:
                    continue
                label = f"x={lo}" if lo == hi else f"x={lo}..{hi}"
                lines.append(f"  {label:<12} RMS {r_:.2f} mm (sd={s_:.2f}) detection={100 * q_:.2f}%")
            for x, y in STUDY_GRID:
                try:
                    r_, s_, q_ = compute_rms(sel, at_position(x, y))
                except EmptySelection:
                    continue
                lines.append(f"  pos ({x:4.0f},{y:5.0f}) RMS {r_:7.2f} mm (sd={s_:6.2f}) detection={100 * q_:6.2f}%")
            ts = timing_stats(sel)
            if not math.isnan(ts["eye"][0]):
                parts = "  ".join(f"{st} {ts[st][0]:.0f}" for st in STAGES)
                lines.append(f"  timing ms: {parts}  total {ts['total'][0]:.0f} (sd={ts['total'][1]:.0f})")
    return "\n".join(lines) + "\n"


# CSV


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def results_to_rows(results):
    for r in results:
        e = r.error
        yield {
            "sample_id": r.sample_id,
            "mode": r.mode,
            "scale": _fmt(r.scale),
            "target_x_mm": _fmt(r.target[0]),
            "target_y_mm": _fmt(r.target[1]),
            "est_x_mm": _fmt(r.estimate[0] if r.estimate else None),
            "est_y_mm": _fmt(r.estimate[1] if r.estimate else None),
            "err_x_mm": _fmt(e[0] if e else None),
            "err_y_mm": _fmt(e[1] if e else None),
            "err_mm": _fmt(r.err_mm if e else None),
            "failure": r.failure,
            **{f"t_{st}_ms": _fmt(r.timings.get(st)) for st in STAGES},
        }


def write_csv(results, path_or_buf):
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", encoding="utf-8", newline="") if own else path_or_buf
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(results_to_rows(results))
    finally:
        if own:
            fh.close()


def results_to_csv_text(results) -> str:
    buf = io.StringIO()
    write_csv(results, buf)
    return buf.getvalue()


def read_csv(path_or_buf):
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, encoding="utf-8", newline="") if own else path_or_buf
    try:
        rd = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(rd.fieldnames or ())
        if missing:
            raise ValueError(f"CSV lacks columns {sorted(missing)}")
        out = []
        for row in rd:
            est = None
            if row["est_x_mm"] != "":
                est = (float(row["est_x_mm"]), float(row["est_y_mm"]))
            timings = {st: float(row[f"t_{st}_ms"]) for st in STAGES if row[f"t_{st}_ms"] != ""}
            out.append(
                SampleResult(
                    row["sample_id"],
                    row["mode"],
                    float(row["scale"]),
                    (float(row["target_x_mm"]), float(row["target_y_mm"])),
                    est,
                    row["failure"],
                    timings,
                )
            )
        return out
    finally:
        if own:
            fh.close()
