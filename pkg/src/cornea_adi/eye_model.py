"""Two-sphere eye model, limbus-based pose recovery and pixel back-projection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadEllipse
from .geometry import Ellipse2D, Ray, Sphere, normalize, reflect, rotate, vec3

# b/a above this counts as a frontal view; the tilt is not measurable there.
NEAR_CIRCULAR = 0.995


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not self.focal_px > 0:
            raise ValueError("focal length must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @classmethod
    def centered(cls, focal_px, width, height):
        return cls(focal_px, (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def scaled(self, s: float) -> "CameraIntrinsics":
        w, h = max(1, int(round(self.width * s))), max(1, int(round(self.height * s)))
        return CameraIntrinsics(self.focal_px * s, (self.cx + 0.5) * s - 0.5, (self.cy + 0.5) * s - 0.5, w, h)

    def pixel_rays(self, u, v) -> np.ndarray:
        """Unit viewing directions for (arrays of) pixel coordinates."""
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        d = np.stack([(u - self.cx) / self.focal_px, (v - self.cy) / self.focal_px, np.ones_like(u)], axis=-1)
        return normalize(d)

    def project(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        z = pts[..., 2]
        return np.stack([self.focal_px * pts[..., 0] / z + self.cx, self.focal_px * pts[..., 1] / z + self.cy], axis=-1)


@dataclass(frozen=True)
class EyeModel:
    cornea_radius: float = 7.8
    limbus_radius: float = 5.5

    def __post_init__(self):
        if not (self.cornea_radius > self.limbus_radius > 0):
            raise ValueError("need cornea_radius > limbus_radius > 0")

    @property
    def limbus_offset(self) -> float:
        """Distance from the corneal-sphere centre to the limbus plane."""
        return math.sqrt(self.cornea_radius**2 - self.limbus_radius**2)

    @property
    def cap_cos(self) -> float:
        """Cosine of the cap half-angle seen from the corneal-sphere centre."""
        return self.limbus_offset / self.cornea_radius


@dataclass(frozen=True)
class EyePose:
    limbus_center: np.ndarray
    gaze: np.ndarray
    cornea_sphere: Sphere = field(repr=False)

    @classmethod
    def from_limbus(cls, limbus_center, gaze, model: EyeModel) -> "EyePose":
        lc, g = vec3(limbus_center), normalize(vec3(gaze))
        return cls(lc, g, Sphere(lc - model.limbus_offset * g, model.cornea_radius))

    def frame(self) -> np.ndarray:
        """Eye-fixed axes as matrix columns: right, up, gaze.

        "Up" is the camera's -Y direction made orthogonal to the gaze, so the
        unwrapped texture keeps the scene's vertical orientation.
        """
        g = self.gaze
        up = np.array([0.0, -1.0, 0.0])
        if abs(np.dot(up, g)) > 0.99:
            up = np.array([0.0, 0.0, -1.0])
        up = normalize(up - np.dot(up, g) * g)
        right = np.cross(up, g)
        return np.column_stack([right, up, g])


def pose_from_limbus(ellipse: Ellipse2D, intrinsics: CameraIntrinsics, model: EyeModel) -> EyePose:
    """Weak-perspective eye pose from the limbus ellipse.

    Depth comes from the major axis (f * r_limbus / a); the limbus centre lies
    on the perspective ray through the ellipse centre. The optical axis is the
    line of sight tilted by arccos(b/a) about the major axis, with the sign that
    points the gaze most directly back along the camera axis.
    """
    a, b = float(ellipse.a), float(ellipse.b)
    if not a > 0 or not b > 0 or b / a > 1.0 + 1e-12:
        raise BadEllipse(f"invalid limbus ellipse a={a} b={b}")
    f = intrinsics.focal_px
    depth = f * model.limbus_radius / a
    u0, v0 = ellipse.center
    los = normalize(vec3((u0 - intrinsics.cx) / f, (v0 - intrinsics.cy) / f, 1.0))
    lc = depth * los
    toward_cam = -los
    ratio = b / a
    if ratio > NEAR_CIRCULAR:
        return EyePose.from_limbus(lc, toward_cam, model)
    tau = math.acos(ratio)
    axis = vec3(math.cos(ellipse.rotation), math.sin(ellipse.rotation), 0.0)
    axis = normalize(axis - np.dot(axis, toward_cam) * toward_cam)
    cands = [rotate(toward_cam, axis, s * tau) for s in (1.0, -1.0)]
    g = max(cands, key=lambda c: -c[2])
    return EyePose.from_limbus(lc, g, model)


def corneal_center(pose: EyePose, model: EyeModel) -> Sphere:
    return Sphere(pose.limbus_center - model.limbus_offset * pose.gaze, model.cornea_radius)


def backproject_pixels(u, v, intrinsics: CameraIntrinsics, pose: EyePose, model: EyeModel):
    """Vectorised back-projection onto the corneal cap.

    Returns ``(points, directions, ok)``; rows with ``ok`` False missed the
    sphere or landed outside the cap and hold NaN.
    """
    d = intrinsics.pixel_rays(u, v)
    c = pose.cornea_sphere.center
    r = model.cornea_radius
    b = d @ (-c)
    disc = b * b - (np.dot(c, c) - r * r)
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    hit = (disc >= 0) & (t > 0)
    p = d * t[..., None]
    n = (p - c) / r
    on_cap = (n @ pose.gaze) >= model.cap_cos - 1e-12
    ok = hit & on_cap
    refl = normalize(reflect(d, n))
    p = np.where(ok[..., None], p, np.nan)
    refl = np.where(ok[..., None], refl, np.nan)
    return p, refl, ok


def backproject_pixel(px, intrinsics: CameraIntrinsics, pose: EyePose, model: EyeModel):
    """Surface point and reflected ray for one pixel, or None off the cap."""
    p, r, ok = backproject_pixels(np.array([px[0]]), np.array([px[1]]), intrinsics, pose, model)
    if not ok[0]:
        return None
    return p[0], Ray(p[0], r[0])
