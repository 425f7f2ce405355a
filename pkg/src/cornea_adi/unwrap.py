"""Equirectangular unwrapping of the corneal cap.

Longitude/latitude are taken on the corneal sphere in the eye frame after a
fixed 90 degree rotation about the eye's x axis. Without it the optical axis
would be the pole of the parameterisation; with it the apex sits at
(lon, lat) = (0, 0) on the equator, where the projection distorts least.

Only the window of the full 360k x 180k canvas that can contain the cap is
materialised; ``offset`` locates the window on the canvas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .eye_model import CameraIntrinsics, EyeModel, EyePose
from .geometry import Ray, normalize, reflect

# model frame -> rotated frame: (x, y, z) -> (x, -z, y)
X_ROT_90 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


@dataclass
class UnwrappedCornea:
    texture: np.ndarray  # (h, w, 3) uint8
    valid_mask: np.ndarray  # (h, w) bool
    k: float  # pixels per degree
    offset: tuple  # (col0, row0) of the window on the full canvas
    pose: EyePose
    model: EyeModel
    intrinsics: CameraIntrinsics
    rotation_note: str = "eye model rotated +90 deg about its x axis before lon/lat"
    source: np.ndarray | None = field(default=None, repr=False, compare=False)

    def sample(self, u, v) -> np.ndarray:
        """Bilinear colour (float) at fractional window coordinates; 0 where invalid."""
        if self.source is None:
            raise ValueError("source image not retained")
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        n = self.normals(u.ravel(), v.ravel())
        _, uv, ok = _surface(n, self.intrinsics, self.pose, self.model)
        out = np.zeros((u.size, 3))
        if ok.any():
            out[ok] = _sample_image(self.source, uv[ok])
        return out.reshape(u.shape + (3,))

    @cached_property
    def _ray_map(self):
        h, w = self.shape
        origin = np.full((h * w, 3), np.nan)
        direction = np.full((h * w, 3), np.nan)
        idx = np.flatnonzero(self.valid_mask)
        rows, cols = np.divmod(idx, w)
        n = self.normals(cols, rows)
        p, refl, _, _ = _geometry(n, self.intrinsics, self.pose, self.model)
        origin[idx], direction[idx] = p, refl
        return origin.reshape(h, w, 3), direction.reshape(h, w, 3)

    @property
    def ray_origin(self) -> np.ndarray:
        """Per-pixel reflection points, NaN where invalid (computed on first use)."""
        return self._ray_map[0]

    @property
    def ray_dir(self) -> np.ndarray:
        return self._ray_map[1]

    @property
    def canvas_shape(self):
        return int(round(180 * self.k)), int(round(360 * self.k))

    @property
    def shape(self):
        return self.valid_mask.shape

    def lonlat(self, u, v):
        """Degrees of longitude/latitude for window pixel coordinates."""
        u = np.asarray(u, float) + self.offset[0]
        v = np.asarray(v, float) + self.offset[1]
        return (u + 0.5) / self.k - 180.0, 90.0 - (v + 0.5) / self.k

    def pixel_of(self, lon, lat):
        u = (np.asarray(lon, float) + 180.0) * self.k - 0.5 - self.offset[0]
        v = (90.0 - np.asarray(lat, float)) * self.k - 0.5 - self.offset[1]
        return u, v

    def normals(self, u, v):
        """Unit corneal normals (camera frame) for window pixel coordinates."""
        lon, lat = self.lonlat(u, v)
        return _normals_from_lonlat(np.radians(lon), np.radians(lat), self.pose)

    def full_canvas(self) -> np.ndarray:
        h, w = self.canvas_shape
        out = np.zeros((h, w, 3), np.uint8)
        c0, r0 = self.offset
        th, tw = self.texture.shape[:2]
        out[r0 : r0 + th, c0 : c0 + tw] = self.texture
        return out


def _normals_from_lonlat(lon, lat, pose: EyePose):
    cl = np.cos(lat)
    rot = np.stack([cl * np.sin(lon), -cl * np.cos(lon), np.sin(lat)], axis=-1)
    n_model = rot @ X_ROT_90  # inverse rotation (orthogonal: R^T x == x @ R)
    return n_model @ pose.frame().T


def _geometry(normals, intrinsics: CameraIntrinsics, pose: EyePose, model: EyeModel):
    p, uv, valid = _surface(normals, intrinsics, pose, model)
    incident = normalize(p)
    refl = normalize(reflect(incident, normals))
    return p, refl, uv, valid


def _surface(normals, intrinsics: CameraIntrinsics, pose: EyePose, model: EyeModel):
    c = pose.cornea_sphere.center
    p = c + model.cornea_radius * normals
    facing = np.einsum("...i,...i->...", p, normals) < 0
    on_cap = normals @ pose.gaze >= model.cap_cos - 1e-12
    uv = intrinsics.project(p)
    inside = (
        (uv[..., 0] >= 0)
        & (uv[..., 0] <= intrinsics.width - 1)
        & (uv[..., 1] >= 0)
        & (uv[..., 1] <= intrinsics.height - 1)
        & (p[..., 2] > 0)
    )
    return p, uv, facing & on_cap & inside


def _bilinear(image: np.ndarray, uv: np.ndarray) -> np.ndarray:
    img = image if image.ndim == 3 else image[..., None]
    coords = [uv[:, 1], uv[:, 0]]
    return np.stack(
        [ndimage.map_coordinates(img[..., c], coords, order=1, mode="nearest") for c in range(img.shape[2])],
        axis=-1,
    )


def _sample_image(src: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear RGB samples; only the bounding box of ``pts`` is converted to float."""
    u0 = max(int(np.floor(pts[:, 0].min())), 0)
    v0 = max(int(np.floor(pts[:, 1].min())), 0)
    u1 = min(int(np.ceil(pts[:, 0].max())) + 1, src.shape[1] - 1)
    v1 = min(int(np.ceil(pts[:, 1].max())) + 1, src.shape[0] - 1)
    crop = src[v0 : v1 + 1, u0 : u1 + 1].astype(np.float32)
    out = _bilinear(crop, pts - np.array([u0, v0], float))
    if out.shape[1] == 1:
        out = np.repeat(out, 3, axis=1)
    return out[:, :3]


def unwrap(image, intrinsics: CameraIntrinsics, pose: EyePose, model: EyeModel, k: float = 8.0) -> UnwrappedCornea:
    """Resample the corneal cap onto an equirectangular texture.

    Output-driven: every texture pixel maps to a corneal normal, the surface
    point is projected into the image and sampled bilinearly. The reflected
    ray at that surface point is stored alongside.
    """
    if k < 0.5:
        raise ValueError("angular density must be at least 0.5 px/deg")
    cap_deg = math.degrees(math.acos(model.cap_cos)) + 1.0
    half = min(cap_deg, 89.0)
    col0 = int(math.floor((180.0 - half) * k))
    col1 = int(math.ceil((180.0 + half) * k))
    row0 = int(math.floor((90.0 - half) * k))
    row1 = int(math.ceil((90.0 + half) * k))
    w, h = col1 - col0, row1 - row0
    cols = np.arange(w) + col0
    rows = np.arange(h) + row0
    lon = np.radians((cols + 0.5) / k - 180.0)
    lat = np.radians(90.0 - (rows + 0.5) / k)
    LON, LAT = np.meshgrid(lon, lat)
    normals = _normals_from_lonlat(LON, LAT, pose)
    # cheap cap test first; the remaining geometry only runs on candidates
    cand = np.flatnonzero((normals @ pose.gaze).ravel() >= model.cap_cos - 1e-12)
    _, uv_c, ok = _surface(normals.reshape(-1, 3)[cand], intrinsics, pose, model)
    idx = cand[ok]
    valid = np.zeros(h * w, bool)
    valid[idx] = True
    valid = valid.reshape(h, w)

    texture = np.zeros((h, w, 3), np.uint8)
    if idx.size:
        samples = _sample_image(np.asarray(image), uv_c[ok])
        texture.reshape(-1, 3)[idx] = np.clip(np.rint(samples[:, :3]), 0, 255).astype(np.uint8)
    return UnwrappedCornea(
        texture=texture,
        valid_mask=valid,
        k=float(k),
        offset=(col0, row0),
        pose=pose,
        model=model,
        intrinsics=intrinsics,
        source=np.asarray(image),
    )


def unwrapped_to_ray(unwrapped: UnwrappedCornea, px):
    """Reflected ray for a window pixel; fractional positions are evaluated exactly."""
    u, v = float(px[0]), float(px[1])
    h, w = unwrapped.shape
    if not (-0.5 <= u <= w - 0.5 and -0.5 <= v <= h - 0.5):
        raise IndexError("pixel outside the texture")
    if u.is_integer() and v.is_integer():
        iu, iv = int(u), int(v)
        if not unwrapped.valid_mask[iv, iu]:
            return None
        return Ray(unwrapped.ray_origin[iv, iu], unwrapped.ray_dir[iv, iu])
    n = unwrapped.normals(np.array([u]), np.array([v]))
    p, refl, _, valid = _geometry(n, unwrapped.intrinsics, unwrapped.pose, unwrapped.model)
    if not valid[0]:
        return None
    return Ray(p[0], refl[0])


def source_pixel(unwrapped: UnwrappedCornea, px):
    """Image position sampled for a window pixel."""
    n = unwrapped.normals(np.array([float(px[0])]), np.array([float(px[1])]))
    p = unwrapped.pose.cornea_sphere.center + unwrapped.model.cornea_radius * n[0]
    return unwrapped.intrinsics.project(p)
