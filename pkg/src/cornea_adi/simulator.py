"""Forward catadioptric renderer with exact ground truth.

A pinhole camera looks at an eye whose corneal cap is a spherical mirror. Rays
that hit the cap are reflected onto a scene plane carrying the device and the
pointer; the dim iris texture is added underneath. Everything else is flat
sclera or skin. Edge pixels are supersampled so that rendered intensities
encode sub-pixel coverage.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from PIL import Image

from .errors import ConfigInvalid
from .eye_model import CameraIntrinsics, EyeModel, EyePose
from .geometry import Ellipse2D, Plane3D, conic_to_ellipse, normalize, reflect, rotate, vec3

log = logging.getLogger(__name__)

STUDY_SCALES = (1.0, 0.5, 0.25, 0.125)
STUDY_GRID = tuple((x, y) for y in (100.0, 0.0, -100.0) for x in (100.0, 200.0, 300.0))
DEVICE_DIMS = {"RECT": (70.0, 140.0), "FINGER": (64.0, 114.0)}

# iris albedo palette, cycled over synthetic participants
IRIS_COLORS = (
    (150, 95, 55),
    (100, 135, 185),
    (150, 125, 70),
    (110, 70, 40),
    (110, 140, 90),
    (140, 145, 150),
)

# scene ids used in per-pixel labels
_BG, _DEVICE, _POINTER = 0, 1, 2
# layer ids
_L_BACK, _L_SKIN, _L_SCLERA, _L_IRIS, _L_PUPIL = 0, 1, 2, 3, 4


def default_intrinsics() -> CameraIntrinsics:
    # 1 px ~ 0.0167 mm at 450 mm: a 1000 px eye region, 0.12 deg of corneal arc per pixel
    return CameraIntrinsics.centered(27000.0, 1760, 1232)


@dataclass
class SceneConfig:
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)
    model: EyeModel = field(default_factory=EyeModel)
    limbus_center: tuple = (0.0, 0.0, 450.0)
    gaze: tuple = (0.0, 0.0, -1.0)
    eyeball_radius: float = 12.0
    pupil_radius: float = 2.0
    plane_point: tuple = (0.0, 0.0, 0.0)
    plane_normal: tuple = (0.0, 0.0, 1.0)
    plane_x_axis: tuple = (1.0, 0.0, 0.0)
    mode: str = "RECT"
    device_dims: tuple = (70.0, 140.0)
    pointer: str = "marker"
    target: tuple = (100.0, 0.0)
    marker_size: float = 20.0
    finger_width: float = 15.0
    finger_length: float = 70.0
    device_color: tuple = (255, 0, 0)
    screen_color: tuple = (255, 255, 255)
    marker_color: tuple = (0, 0, 255)
    finger_color: tuple = (230, 170, 130)
    background: tuple = (0, 0, 0)
    sclera_color: tuple = (218, 212, 204)
    skin_color: tuple = (196, 150, 128)
    iris_color: tuple = (150, 95, 55)
    iris_seed: int = 0
    iris_blend: float = 0.25
    opening_semi_axes: tuple = (11.5, 8.0)
    face_semi_axes: tuple | None = None
    supersample: int = 4

    def validate(self):
        if self.mode not in DEVICE_DIMS:
            raise ConfigInvalid(f"unknown mode {self.mode!r}")
        if self.pointer not in ("marker", "finger", "none"):
            raise ConfigInvalid(f"unknown pointer {self.pointer!r}")
        p = self.pose()
        if np.dot(p.gaze, -normalize(p.limbus_center)) <= 0:
            raise ConfigInvalid("eye must face the camera")
        plane = self.plane()
        if abs(plane.signed_distance(p.limbus_center)) <= 0:
            raise ConfigInvalid("eye lies on the scene plane")
        if not (0 < self.pupil_radius < self.model.limbus_radius):
            raise ConfigInvalid("pupil radius must lie inside the limbus")
        if min(self.device_dims) <= 0 or self.supersample < 1:
            raise ConfigInvalid("bad device dimensions or supersampling")

    def pose(self) -> EyePose:
        return EyePose.from_limbus(self.limbus_center, self.gaze, self.model)

    def plane(self) -> Plane3D:
        return Plane3D(self.plane_point, self.plane_normal)

    def plane_axes(self):
        n = self.plane().normal
        x = vec3(self.plane_x_axis)
        x = normalize(x - np.dot(x, n) * n)
        # y points "up" (camera -Y) for the default frame
        y = np.cross(x, n)
        return x, y

    def plane_point_of(self, xy) -> np.ndarray:
        x_ax, y_ax = self.plane_axes()
        return vec3(self.plane_point) + xy[0] * x_ax + xy[1] * y_ax

    # plain-text key = value serialisation
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "intrinsics":
                i = val
                lines += [
                    f"focal_px = {i.focal_px!r}",
                    f"cx = {i.cx!r}",
                    f"cy = {i.cy!r}",
                    f"width = {i.width}",
                    f"height = {i.height}",
                ]
            elif f.name == "model":
                lines += [f"cornea_radius = {val.cornea_radius!r}", f"limbus_radius = {val.limbus_radius!r}"]
            elif val is None:
                lines.append(f"{f.name} = none")
            elif isinstance(val, (tuple, list, np.ndarray)):
                lines.append(f"{f.name} = " + ", ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in val))
            else:
                lines.append(f"{f.name} = {val!r}" if isinstance(val, float) else f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SceneConfig":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigInvalid(f"bad line {raw!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            kv[k] = v
        base = cls()
        intr = base.intrinsics
        intr_keys = ("focal_px", "cx", "cy", "width", "height")
        if any(k in kv for k in intr_keys):
            w = int(kv.pop("width", intr.width))
            h = int(kv.pop("height", intr.height))
            fpx = float(kv.pop("focal_px", intr.focal_px))
            cx = float(kv.pop("cx", (w - 1) / 2.0))
            cy = float(kv.pop("cy", (h - 1) / 2.0))
            intr = CameraIntrinsics(fpx, cx, cy, w, h)
        model = EyeModel(
            float(kv.pop("cornea_radius", base.model.cornea_radius)),
            float(kv.pop("limbus_radius", base.model.limbus_radius)),
        )
        out = {"intrinsics": intr, "model": model}
        types = {f.name: getattr(base, f.name) for f in fields(cls)}
        for k, v in kv.items():
            if k not in types:
                raise ConfigInvalid(f"unknown scene key {k!r}")
            proto = types[k]
            if v.lower() == "none":
                out[k] = None
            elif isinstance(proto, tuple) or (proto is None and "," in v):
                parts = [p.strip() for p in v.split(",")]
                if proto and all(isinstance(p, int) for p in proto):
                    out[k] = tuple(int(p) for p in parts)
                else:
                    out[k] = tuple(float(p) for p in parts)
            elif isinstance(proto, bool):
                out[k] = v.lower() in ("1", "true", "yes")
            elif isinstance(proto, int):
                out[k] = int(v)
            elif isinstance(proto, float):
                out[k] = float(v)
            else:
                out[k] = v
        return replace(base, **out)


@dataclass
class GroundTruth:
    limbus: Ellipse2D
    pose: EyePose
    pupil_pixel: tuple
    device_pixels: dict
    pointer_pixel: tuple | None
    target: tuple
    mode: str

    def scaled(self, s: float) -> "GroundTruth":
        """Pixel quantities for the image downscaled by ``s``."""

        def px(p):
            return None if p is None else ((p[0] + 0.5) * s - 0.5, (p[1] + 0.5) * s - 0.5)

        return replace(
            self,
            limbus=self.limbus.scaled(s),
            pupil_pixel=px(self.pupil_pixel),
            device_pixels={k: px(v) for k, v in self.device_pixels.items()},
            pointer_pixel=px(self.pointer_pixel),
        )

    def to_dict(self) -> dict:
        e = self.limbus
        return {
            "mode": self.mode,
            "limbus_center_px": list(e.center),
            "limbus_a_px": e.a,
            "limbus_b_px": e.b,
            "limbus_rotation_rad": e.rotation,
            "limbus_center_mm": self.pose.limbus_center.tolist(),
            "gaze": self.pose.gaze.tolist(),
            "pupil_px": list(self.pupil_pixel),
            "device_px": {k: (list(v) if v is not None else None) for k, v in self.device_pixels.items()},
            "pointer_px": list(self.pointer_pixel) if self.pointer_pixel is not None else None,
            "target_x_mm": self.target[0],
            "target_y_mm": self.target[1],
        }


def limbus_ellipse(cfg: SceneConfig) -> Ellipse2D:
    """Exact image of the 3D limbus circle, via the circle's plane homography."""
    pose = cfg.pose()
    frame = pose.frame()
    e1, e2 = frame[:, 0], frame[:, 1]
    i = cfg.intrinsics
    K = np.array([[i.focal_px, 0, i.cx], [0, i.focal_px, i.cy], [0, 0, 1.0]])
    H = K @ np.column_stack([e1, e2, pose.limbus_center])
    r = cfg.model.limbus_radius
    Hinv = np.linalg.inv(H)
    C = Hinv.T @ np.diag([1.0, 1.0, -r * r]) @ Hinv
    conic = [C[0, 0], 2 * C[0, 1], C[1, 1], 2 * C[0, 2], 2 * C[1, 2], C[2, 2]]
    return conic_to_ellipse(np.array(conic) / np.linalg.norm(conic))


def _iris_texture(seed: int):
    rng = np.random.default_rng(seed)
    freqs = rng.integers(8, 90, size=10)
    phases = rng.uniform(0, 2 * math.pi, size=10)
    weights = rng.uniform(0.3, 1.0, size=10)
    weights /= weights.sum()
    ring_f, ring_p = rng.uniform(2.0, 5.0), rng.uniform(0, 2 * math.pi)

    # fibres depend on angle only: tabulate once
    nbins = 8192
    grid = np.arange(nbins) * (2 * math.pi / nbins)
    fib = (weights[:, None] * np.sin(freqs[:, None] * grid[None, :] + phases[:, None])).sum(axis=0)
    fib_lut = 0.55 + 0.3 * (0.5 + 0.5 * fib)

    def tex(rho, alpha):
        k = (np.floor(alpha * (nbins / (2 * math.pi))).astype(np.int64)) % nbins
        return fib_lut[k] + 0.15 * (0.5 + 0.5 * np.cos(rho * ring_f + ring_p))

    return tex


class _Tracer:
    """Per-scene precomputed state for shading arbitrary pixel positions."""

    def __init__(self, cfg: SceneConfig):
        cfg.validate()
        self.cfg = cfg
        self.intr = cfg.intrinsics
        self.pose = cfg.pose()
        self.frame = self.pose.frame()
        self.plane = cfg.plane()
        self.x_ax, self.y_ax = cfg.plane_axes()
        self.dev_origin = vec3(cfg.plane_point)
        self.iris = _iris_texture(cfg.iris_seed)
        self.limbus = limbus_ellipse(cfg)
        g = self.pose.gaze
        r_e, r_l = cfg.eyeball_radius, cfg.model.limbus_radius
        self.eye_center = self.pose.limbus_center - math.sqrt(max(r_e**2 - r_l**2, 0.0)) * g
        ec = self.intr.project(self.eye_center)
        z = self.eye_center[2]
        f = self.intr.focal_px
        self.opening = Ellipse2D(ec, cfg.opening_semi_axes[0] * f / z, cfg.opening_semi_axes[1] * f / z, 0.0)
        fa = cfg.face_semi_axes
        self.face = None if fa is None else Ellipse2D(ec, fa[0] * f / z, fa[1] * f / z, 0.0)
        # bounding box of the cap in the image
        pts = self.limbus.points(256)
        self.bbox = (
            math.floor(pts[:, 0].min()) - 2,
            math.floor(pts[:, 1].min()) - 2,
            math.ceil(pts[:, 0].max()) + 2,
            math.ceil(pts[:, 1].max()) + 2,
        )

    def _plane_content(self, xy_x, xy_y, valid):
        """Scene id and colour at plane coordinates."""
        cfg = self.cfg
        sid = np.zeros(xy_x.shape, dtype=np.int8)
        W, H = cfg.device_dims
        on_dev = valid & (np.abs(xy_x) <= W / 2) & (np.abs(xy_y) <= H / 2)
        sid[on_dev] = _DEVICE
        tx, ty = cfg.target
        if cfg.pointer == "marker":
            h = cfg.marker_size / 2
            on_ptr = valid & (np.abs(xy_x - tx) <= h) & (np.abs(xy_y - ty) <= h)
        elif cfg.pointer == "finger":
            r = cfg.finger_width / 2
            y_top, y_bot = ty - r, ty - cfg.finger_length + r
            yc = np.clip(xy_y, y_bot, y_top)
            on_ptr = valid & ((xy_x - tx) ** 2 + (xy_y - yc) ** 2 <= r * r)
        else:
            on_ptr = np.zeros_like(valid)
        sid[on_ptr] = _POINTER
        palette = np.array(
            [
                cfg.background,
                cfg.device_color if cfg.mode == "RECT" else cfg.screen_color,
                cfg.marker_color if cfg.pointer == "marker" else cfg.finger_color,
            ],
            dtype=float,
        )
        return sid, palette[sid]

    def trace(self, u, v):
        """Trace camera rays through pixel positions.

        Returns a dict with the cap mask, surface points, reflected directions,
        scene points (NaN where the reflected ray misses the plane) and plane
        coordinates.
        """
        d = self.intr.pixel_rays(u, v)
        c = self.pose.cornea_sphere.center
        rc = self.cfg.model.cornea_radius
        b = d @ (-c)
        disc = b * b - (c @ c - rc * rc)
        with np.errstate(invalid="ignore"):
            t = -b - np.sqrt(disc)
        hit = (disc >= 0) & (t > 0)
        p = d * np.where(hit, t, 0.0)[..., None]
        n = (p - c) / rc
        cap = hit & ((n @ self.pose.gaze) >= self.cfg.model.cap_cos)
        r = normalize(reflect(d, n))
        pn, p0 = self.plane.normal, self.plane.point
        denom = r @ pn
        with np.errstate(divide="ignore", invalid="ignore"):
            ts = ((p0 - p) @ pn) / denom
        ok = cap & (np.abs(denom) > 1e-12) & (ts > 0)
        X = p + r * np.where(ok, ts, 0.0)[..., None]
        rel = X - self.dev_origin
        px, py = rel @ self.x_ax, rel @ self.y_ax
        X = np.where(ok[..., None], X, np.nan)
        return {"dirs": d, "cap": cap, "points": p, "normals": n, "reflected": r, "scene_ok": ok, "scene": X, "px": px, "py": py}

    def background_layers(self):
        """Full-frame skin/sclera/background colour and labels (no tracing)."""
        cfg, intr = self.cfg, self.intr
        u = np.arange(intr.width, dtype=float)
        v = np.arange(intr.height, dtype=float)

        def inside(e):
            # axis-aligned ellipses only, evaluated separably
            du = ((u - e.center[0]) / e.a) ** 2
            dv = ((v - e.center[1]) / e.b) ** 2
            return dv[:, None] + du[None, :] <= 1.0

        in_open = inside(self.opening)
        in_face = np.ones_like(in_open) if self.face is None else inside(self.face)
        layer = np.where(in_open, _L_SCLERA, np.where(in_face, _L_SKIN, _L_BACK)).astype(np.int16)
        palette = np.zeros((5, 3))
        palette[_L_BACK], palette[_L_SKIN], palette[_L_SCLERA] = cfg.background, cfg.skin_color, cfg.sclera_color
        return palette[layer], layer * 4

    def shade(self, u, v, trace_mask=None):
        """Colour (float RGB) and an integer edge label for pixel positions."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        cfg = self.cfg
        pts = np.stack([u, v], axis=-1).reshape(-1, 2)
        shape = u.shape
        sid = np.zeros(shape, dtype=np.int8)
        in_face = np.ones(shape, bool) if self.face is None else self.face.contains(pts).reshape(shape)
        in_open = self.opening.contains(pts).reshape(shape)
        layer = np.where(in_open, _L_SCLERA, np.where(in_face, _L_SKIN, _L_BACK)).astype(np.int8)
        palette = np.zeros((5, 3))
        palette[_L_BACK], palette[_L_SKIN], palette[_L_SCLERA] = cfg.background, cfg.skin_color, cfg.sclera_color
        rgb = palette[layer]

        if trace_mask is None:
            x0, y0, x1, y1 = self.bbox
            trace_mask = (u >= x0) & (u <= x1) & (v >= y0) & (v <= y1)
        idx = np.flatnonzero(trace_mask.ravel())
        if idx.size:
            tr = self.trace(u.ravel()[idx], v.ravel()[idx])
            cap = tr["cap"]
            ci = idx[cap]
            d = tr["dirs"][cap]
            # iris seen straight through the cornea (no refraction)
            g, lc = self.pose.gaze, self.pose.limbus_center
            ti = (g @ lc) / (d @ g)
            q = d * ti[:, None] - lc
            rho = np.linalg.norm(q, axis=1)
            alpha = np.arctan2(q @ self.frame[:, 1], q @ self.frame[:, 0])
            pupil = rho < cfg.pupil_radius
            under = np.where(
                pupil[:, None],
                0.0,
                cfg.iris_blend * np.asarray(cfg.iris_color, float)[None, :] * self.iris(rho, alpha)[:, None],
            )
            s_id, s_rgb = self._plane_content(tr["px"][cap], tr["py"][cap], tr["scene_ok"][cap])
            flat_rgb = rgb.reshape(-1, 3)
            flat_rgb[ci] = np.clip(s_rgb + under, 0, 255)
            layer.ravel()[ci] = np.where(pupil, _L_PUPIL, _L_IRIS)
            sid.ravel()[ci] = s_id
        return rgb, layer.astype(np.int16) * 4 + sid


def _rook_offsets(n: int):
    """N-rooks sub-pixel pattern: n distinct x and n distinct y offsets.

    A regular sqrt(n) x sqrt(n) grid resolves axis-aligned edges in only
    sqrt(n) coverage steps; this pattern resolves them in n.
    """
    i = np.arange(n)
    m = next(c for c in range(int(math.isqrt(n)) + 1, n) if math.gcd(c, n) == 1) if n > 2 else 1
    return (i + 0.5) / n - 0.5, ((i * m) % n + 0.5) / n - 0.5


def render(cfg: SceneConfig):
    """Render ``cfg`` to an 8-bit RGB image and its ground truth."""
    tr = _Tracer(cfg)
    intr = cfg.intrinsics
    rgb, label = tr.background_layers()
    x0, y0, x1, y1 = tr.bbox
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, intr.width - 1), min(y1, intr.height - 1)
    if x1 >= x0 and y1 >= y0:
        vv, uu = np.mgrid[y0 : y1 + 1, x0 : x1 + 1].astype(float)
        brgb, blab = tr.shade(uu, vv, trace_mask=np.ones(uu.shape, bool))
        rgb[y0 : y1 + 1, x0 : x1 + 1] = brgb
        label[y0 : y1 + 1, x0 : x1 + 1] = blab

    ss = cfg.supersample
    if ss > 1:
        edge = np.zeros(label.shape, bool)
        dh = label[:, 1:] != label[:, :-1]
        dv = label[1:, :] != label[:-1, :]
        edge[:, 1:] |= dh
        edge[:, :-1] |= dh
        edge[1:, :] |= dv
        edge[:-1, :] |= dv
        ey, ex = np.nonzero(edge)
        if ey.size:
            ou, ov = _rook_offsets(ss * ss)
            su = ex[:, None].astype(float) + ou[None, :]
            sv = ey[:, None].astype(float) + ov[None, :]
            x0, y0, x1, y1 = tr.bbox
            tmask = (su >= x0 - 1) & (su <= x1 + 1) & (sv >= y0 - 1) & (sv <= y1 + 1)
            srgb, _ = tr.shade(su, sv, trace_mask=tmask)
            rgb[ey, ex] = srgb.mean(axis=1)
    image = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return image, ground_truth(cfg, tr)


def specular_point(cfg: SceneConfig, X, pose: EyePose | None = None, iters: int = 100):
    """Corneal surface point that reflects scene point ``X`` into the camera."""
    pose = pose or cfg.pose()
    c, rc = pose.cornea_sphere.center, cfg.model.cornea_radius
    X = vec3(X)
    n = normalize(normalize(X - c) + normalize(-c))
    for _ in range(iters):
        p = c + rc * n
        n_new = normalize(normalize(X - p) + normalize(-p))
        if np.linalg.norm(n_new - n) < 1e-14:
            n = n_new
            break
        n = n_new
    p = c + rc * n
    on_cap = float(n @ pose.gaze) >= cfg.model.cap_cos
    return p, on_cap


def scene_point_pixel(cfg: SceneConfig, X):
    p, on_cap = specular_point(cfg, X)
    if not on_cap:
        return None
    u, v = cfg.intrinsics.project(p)
    return (float(u), float(v))


def ground_truth(cfg: SceneConfig, tracer: _Tracer | None = None) -> GroundTruth:
    tracer = tracer or _Tracer(cfg)
    pose = tracer.pose
    W, _ = cfg.device_dims
    dev = {
        "L": scene_point_pixel(cfg, cfg.plane_point_of((-W / 2, 0.0))),
        "C": scene_point_pixel(cfg, cfg.plane_point_of((0.0, 0.0))),
        "R": scene_point_pixel(cfg, cfg.plane_point_of((W / 2, 0.0))),
    }
    ptr = None if cfg.pointer == "none" else scene_point_pixel(cfg, cfg.plane_point_of(cfg.target))
    pupil = tuple(float(x) for x in cfg.intrinsics.project(pose.limbus_center))
    return GroundTruth(tracer.limbus, pose, pupil, dev, ptr, tuple(float(t) for t in cfg.target), cfg.mode)


def trace_scene_points(cfg: SceneConfig, u, v):
    """Scene-plane points seen through the cornea at pixel positions (NaN if none)."""
    tr = _Tracer(cfg).trace(np.asarray(u, float), np.asarray(v, float))
    return tr["scene"], tr["scene_ok"]


def downscale(image: np.ndarray, factor: float) -> np.ndarray:
    """Area-averaging resize by ``factor`` (<= 1)."""
    if factor == 1.0:
        return image.copy()
    if factor not in STUDY_SCALES:
        log.warning("scale factor %s is not one of the study factors %s", factor, STUDY_SCALES)
    inv = 1.0 / factor
    h, w = image.shape[:2]
    n = int(round(inv))
    if abs(inv - n) < 1e-9 and h % n == 0 and w % n == 0:
        blocks = image.reshape(h // n, n, w // n, n, -1).astype(np.float64)
        out = blocks.mean(axis=(1, 3))
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
        return out if image.ndim == 3 else out[..., 0]
    size = (max(1, int(round(w * factor))), max(1, int(round(h * factor))))
    return np.asarray(Image.fromarray(image).resize(size, Image.BOX))


# synthetic study suite


@dataclass(frozen=True)
class StudySample:
    sample_id: str
    participant: int
    position: tuple
    repetition: int
    scene: SceneConfig


def _tilt(v, ax_deg, ay_deg):
    v = rotate(v, (1.0, 0.0, 0.0), math.radians(ax_deg))
    return rotate(v, (0.0, 1.0, 0.0), math.radians(ay_deg))


def make_participants(n: int, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    out = []
    for p in range(n):
        lc = np.array([rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), 450.0 + rng.uniform(-10, 10)])
        toward = -normalize(lc)
        gaze = _tilt(toward, rng.uniform(-2, 2), rng.uniform(-2, 2))
        out.append(
            {
                "limbus_center": tuple(lc),
                "gaze": tuple(gaze),
                "iris_color": IRIS_COLORS[p % len(IRIS_COLORS)],
                "iris_seed": int(rng.integers(0, 2**31)),
            }
        )
    return out


def make_study_suite(
    mode: str = "RECT",
    participants: int = 10,
    repetitions: int = 4,
    seed: int = 0,
    grid=STUDY_GRID,
    base: SceneConfig | None = None,
    position_jitter: float = 2.0,
    pose_jitter_deg: float = 1.0,
):
    """Synthetic counterpart of the 9-position x 4-repetition protocol."""
    base = base or SceneConfig()
    base = replace(
        base,
        mode=mode,
        device_dims=DEVICE_DIMS[mode],
        pointer="marker" if mode == "RECT" else "finger",
    )
    people = make_participants(participants, seed)
    suite = []
    for p, person in enumerate(people):
        for k, (gx, gy) in enumerate(grid):
            for r in range(repetitions):
                rng = np.random.default_rng(np.random.SeedSequence([seed, 2, p, k, r]))
                jx, jy = rng.uniform(-position_jitter, position_jitter, size=2)
                ax, ay = rng.uniform(-pose_jitter_deg, pose_jitter_deg, size=2)
                gaze = _tilt(vec3(person["gaze"]), ax, ay)
                scene = replace(
                    base,
                    limbus_center=person["limbus_center"],
                    gaze=tuple(gaze),
                    iris_color=person["iris_color"],
                    iris_seed=person["iris_seed"],
                    target=(gx + jx, gy + jy),
                )
                sid = f"p{p:02d}_x{int(gx)}_y{int(gy)}_r{r}"
                suite.append(StudySample(sid, p, (gx, gy), r, scene))
    return suite


def save_png(path, image: np.ndarray):
    Image.fromarray(image).save(path)


def load_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img)
