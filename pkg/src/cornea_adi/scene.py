"""Device and pointer detection in the unwrapped corneal texture.

Gating happens in HSV space. Key pixels are then refined with a soft
per-pixel coverage estimate, so that edge pixels partially covered by an
object pull the estimate by the fraction they are covered. Without this the
key points snap to the texture grid, which costs several millimetres on the
scene plane.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ObjectNotFound
from .unwrap import UnwrappedCornea

_EIGHT = np.ones((3, 3), bool)
# coverage support: the component grown by this many pixels
SUPPORT_DILATION = 1


@dataclass(frozen=True)
class Gates:
    red_hue: float = 0.0
    blue_hue: float = 240.0
    red_hue_tol: float = 15.0
    blue_hue_tol: float = 20.0
    min_saturation: float = 0.4
    min_value: float = 0.25
    screen_value: float = 0.75
    screen_max_saturation: float = 0.2
    skin_hue: tuple = (0.0, 50.0)
    skin_min_saturation: float = 0.15
    skin_min_value: float = 0.3
    # minimum areas in square degrees of corneal normal angle
    device_min_area: float = 4.0
    pointer_min_area: float = 0.25
    flood_iterations: int = 8
    flood_tol0: float = 0.06
    flood_tol_step: float = 0.03
    aspect_tolerance: float = 0.25


DEFAULT_GATES = Gates()


@dataclass(frozen=True)
class DetectedObject:
    kind: str  # DeviceRect, Marker or Finger
    left: tuple
    center: tuple
    right: tuple
    bbox: tuple  # (u0, v0, u1, v1) inclusive
    confidence: float
    area: float = 0.0

    def __post_init__(self):
        if not (self.left[0] <= self.center[0] <= self.right[0]):
            raise ValueError("key pixels out of order")


def rgb_to_hsv(texture: np.ndarray):
    """Hue in degrees, saturation and value in [0, 1]."""
    rgb = texture.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    c = mx - mn
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(
            mx == r,
            ((g - b) / c) % 6.0,
            np.where(mx == g, (b - r) / c + 2.0, (r - g) / c + 4.0),
        )
        s = np.where(mx > 0, c / mx, 0.0)
    h = np.where(c > 0, h * 60.0, 0.0)
    return h, s, mx


def _hue_close(h, ref, tol):
    d = np.abs((h - ref + 180.0) % 360.0 - 180.0)
    return d <= tol


def _components(mask: np.ndarray):
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return labels, np.zeros(0, int)
    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return labels, areas


def _largest(mask: np.ndarray, min_area: float):
    labels, areas = _components(mask)
    if areas.size == 0 or areas.max() < min_area:
        return None
    # ties broken by lowest label, i.e. raster order of the first pixel
    best = int(np.argmax(areas)) + 1
    return labels == best


def _bbox(mask):
    rows, cols = np.nonzero(mask)
    return int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max())


def _raw_red(rgb):
    return rgb[..., 0] - np.maximum(rgb[..., 1], rgb[..., 2])


def _raw_blue(rgb):
    return rgb[..., 2] - np.maximum(rgb[..., 0], rgb[..., 1])


def _raw_white(rgb):
    return rgb.min(axis=-1)


def _raw_luma(rgb):
    return rgb.mean(axis=-1)


def _local_background(raw: np.ndarray, mask: np.ndarray, valid: np.ndarray, exclude=None):
    """Median of ``raw`` in a ring just outside ``mask``."""
    ring = ndimage.binary_dilation(mask, structure=_EIGHT, iterations=5) & ~ndimage.binary_dilation(
        mask, structure=_EIGHT, iterations=2
    )
    ring &= valid
    if exclude is not None:
        ring &= ~exclude
    if ring.sum() < 4:
        return 0.0
    return float(np.median(raw[ring]))


class _Coverage:
    """Fractional object coverage, evaluated on a grid finer than the texture.

    Pixels well inside the component count fully; across the boundary band
    coverage is a linear ramp between the local background and foreground
    levels. The support is kept one pixel wide around the component so that
    structured background (pupil next to iris) contributes little. Sampling at ``ss`` points per
    texture pixel keeps the resampling (aliasing) error of those sums small.
    """

    def __init__(self, unwrapped: UnwrappedCornea, comp, raw_fn, exclude=None, ss: int = 4):
        self.uw, self.raw_fn, self.ss = unwrapped, raw_fn, ss
        valid = unwrapped.valid_mask
        raw = raw_fn(unwrapped.texture.astype(np.float64))
        self.bg = _local_background(raw, comp, valid, exclude)
        core = ndimage.binary_erosion(comp, structure=_EIGHT)
        self.fg = float(np.median(raw[core])) if core.any() else float(raw[comp].max())
        self.support = ndimage.binary_dilation(comp, structure=_EIGHT, iterations=SUPPORT_DILATION) & valid
        if exclude is not None:
            self.support &= ~exclude
        self.inner = ndimage.binary_erosion(comp, structure=_EIGHT, iterations=2)

    def at(self, u, v):
        h, w = self.support.shape
        iu = np.clip(np.rint(u).astype(int), 0, w - 1)
        iv = np.clip(np.rint(v).astype(int), 0, h - 1)
        sup, inn = self.support[iv, iu], self.inner[iv, iu]
        span = self.fg - self.bg
        if span <= 1e-6:
            return sup.astype(float)
        cov = np.zeros(np.shape(u))
        edge = sup & ~inn
        if self.uw.source is not None:
            raw = self.raw_fn(self.uw.sample(u[edge], v[edge]))
        else:
            raw = self.raw_fn(self.uw.texture[iv[edge], iu[edge]].astype(np.float64))
        cov[edge] = np.clip((raw - self.bg) / span, 0.0, 1.5)
        cov[inn & sup] = 1.0
        return cov

    def grid(self, u0, v0, u1, v1):
        """Fine sample positions covering texture pixels u0..u1 x v0..v1."""
        step = 1.0 / self.ss
        us = np.arange(u0 - 0.5 + step / 2, u1 + 0.5, step)
        vs = np.arange(v0 - 0.5 + step / 2, v1 + 0.5, step)
        V, U = np.meshgrid(vs, us, indexing="ij")
        return U, V, self.at(U, V)


def _centroid(cov: _Coverage):
    U, V, c = cov.grid(*_bbox(cov.support))
    tot = c.sum()
    if not tot > 0:
        raise ObjectNotFound("empty coverage")
    return float((c * U).sum() / tot), float((c * V).sum() / tot)


def _edge_key_points(cov: _Coverage, band: int = 2):
    """Centroid plus left/right edge midpoints.

    The edges sit half the integrated row width either side of the row's
    coverage-weighted centre; a linear trend over a few rows is evaluated at
    the centroid row.
    """
    cu, cv = _centroid(cov)
    u0, _, u1, _ = _bbox(cov.support)
    r0 = int(round(cv))
    U, V, c = cov.grid(u0, r0 - band, u1, r0 + band)
    step = 1.0 / cov.ss
    widths = c.sum(axis=1) * step
    keep = widths > 0
    if not keep.any():
        raise ObjectNotFound("empty coverage")
    centers = (c * U).sum(axis=1)[keep] * step / widths[keep]
    rs = V[keep, 0]
    widths = widths[keep]
    if len(rs) >= 2:
        width = float(np.polyval(np.polyfit(rs, widths, 1), cv))
        mid = float(np.polyval(np.polyfit(rs, centers, 1), cv))
    else:
        width, mid = float(widths[0]), float(centers[0])
    half = max(width, 1e-6) / 2.0
    return (mid - half, cv), (cu, cv), (mid + half, cv)


def _aspect_confidence(mask, dims, tol):
    u0, v0, u1, v1 = _bbox(mask)
    area = mask.sum()
    conf = area / float((u1 - u0 + 1) * (v1 - v0 + 1))
    if dims is not None:
        W, H = dims
        aspect = (v1 - v0 + 1) / float(u1 - u0 + 1)
        if abs(aspect / (H / W) - 1.0) > tol:
            conf *= 0.5
    return float(conf)


def _gate_device(tex, valid, mode, gates: Gates):
    h, s, v = rgb_to_hsv(tex)
    if mode == "RECT":
        mask = _hue_close(h, gates.red_hue, gates.red_hue_tol) & (s >= gates.min_saturation) & (v >= gates.min_value)
        raw = _raw_red
    elif mode == "FINGER":
        mask = (v >= gates.screen_value) & (s <= gates.screen_max_saturation)
        raw = _raw_white
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return mask & valid, raw


def detect_device(unwrapped: UnwrappedCornea, mode: str = "RECT", dims=None, gates: Gates = DEFAULT_GATES) -> DetectedObject:
    """Largest component passing the device gate, with sub-pixel key points."""
    tex, valid = unwrapped.texture, unwrapped.valid_mask
    mask, raw = _gate_device(tex, valid, mode, gates)
    comp = _largest(mask, gates.device_min_area * unwrapped.k**2)
    if comp is None:
        raise ObjectNotFound("no device-like component", objects=("device",))
    L, C, R = _edge_key_points(_Coverage(unwrapped, comp, raw))
    return DetectedObject(
        "DeviceRect",
        L,
        C,
        R,
        _bbox(comp),
        _aspect_confidence(comp, dims, gates.aspect_tolerance),
        float(comp.sum()),
    )


def _marker(unwrapped: UnwrappedCornea, exclude, gates: Gates) -> DetectedObject:
    tex, valid = unwrapped.texture, unwrapped.valid_mask
    h, s, v = rgb_to_hsv(tex)
    mask = _hue_close(h, gates.blue_hue, gates.blue_hue_tol) & (s >= gates.min_saturation) & (v >= gates.min_value)
    mask &= valid & ~exclude
    comp = _largest(mask, max(gates.pointer_min_area * unwrapped.k**2, 1.0))
    if comp is None:
        raise ObjectNotFound("no marker component", objects=("pointer",))
    cu, cv = _centroid(_Coverage(unwrapped, comp, _raw_blue, exclude))
    u0, v0, u1, v1 = _bbox(comp)
    return DetectedObject("Marker", (cu, cv), (cu, cv), (cu, cv), (u0, v0, u1, v1), _aspect_confidence(comp, None, 0), float(comp.sum()))


def _flood(seed, colors, ref, tol, allowed):
    dist = np.linalg.norm(colors - ref, axis=-1) / 255.0
    region = (dist <= tol) & allowed
    labels, _ = ndimage.label(region, structure=_EIGHT)
    lab = labels[seed]
    if lab == 0:
        return np.zeros_like(region)
    return labels == lab


def _finger(unwrapped: UnwrappedCornea, device: DetectedObject | None, exclude, gates: Gates) -> DetectedObject:
    tex, valid = unwrapped.texture, unwrapped.valid_mask
    h, s, v = rgb_to_hsv(tex)
    skin = (h >= gates.skin_hue[0]) & (h <= gates.skin_hue[1]) & (s >= gates.skin_min_saturation) & (v >= gates.skin_min_value)
    allowed = valid & ~exclude
    cand = skin & allowed
    if device is not None:
        cols = np.arange(tex.shape[1])[None, :]
        cand &= cols > device.bbox[2]
    if not cand.any():
        raise ObjectNotFound("no skin-coloured seed", objects=("pointer",))
    colors = tex.astype(np.float64)
    # brightest candidate; ties by raster order
    seed = np.unravel_index(np.argmax(np.where(cand, v, -1.0)), v.shape)
    ref = colors[seed]
    min_area = max(gates.pointer_min_area * unwrapped.k**2, 1.0)
    prev_area, region = 0, None
    for it in range(gates.flood_iterations):
        tol = gates.flood_tol0 + it * gates.flood_tol_step
        cur = _flood(seed, colors, ref, tol, allowed)
        area = int(cur.sum())
        if area == 0:
            break
        # runaway growth into the iris means the tolerance overshot
        if region is not None and area > 4 * prev_area + 16:
            break
        region = cur
        converged = prev_area > 0 and area <= prev_area * 1.02
        prev_area = area
        ref = colors[cur].mean(axis=0)  # adapt the reference colour
        if converged and area >= min_area:
            break
    if region is None or region.sum() < min_area:
        raise ObjectNotFound("flood fill did not converge on a hand", objects=("pointer",))
    tip = _fingertip(_Coverage(unwrapped, region, _raw_luma, exclude), region)
    u0, v0, u1, v1 = _bbox(region)
    return DetectedObject("Finger", tip, tip, tip, (u0, v0, u1, v1), _aspect_confidence(region, None, 0), float(region.sum()))


def _fingertip(cov: _Coverage, region):
    """Topmost point of the finger region at sub-pixel precision.

    The tip column is the coverage-weighted centre of the top rows; the tip
    row integrates coverage up that column from a point inside the finger.
    """
    rows, cols = np.nonzero(region)
    top = int(rows.min())
    band = rows <= top + 2
    U, V, c = cov.grid(int(cols[band].min()), top - 2, int(cols[band].max()), top + 2)
    tot = c.sum()
    cu = float((c * U).sum() / tot) if tot > 0 else float(cols[band].mean())
    start = top + 3.0
    step = 1.0 / cov.ss
    vs = np.arange(top - 3 + step / 2, start, step)
    col = cov.at(np.full(vs.shape, cu), vs)
    return (cu, float(start - col.sum() * step))


def detect_pointer(
    unwrapped: UnwrappedCornea,
    mode: str = "Marker",
    device: DetectedObject | None = None,
    gates: Gates = DEFAULT_GATES,
) -> DetectedObject:
    """Blue marker centroid or fingertip; the device box is excluded."""
    exclude = np.zeros(unwrapped.valid_mask.shape, bool)
    if device is not None:
        u0, v0, u1, v1 = device.bbox
        exclude[max(v0 - 1, 0) : v1 + 2, max(u0 - 1, 0) : u1 + 2] = True
    if mode == "Marker":
        return _marker(unwrapped, exclude, gates)
    if mode == "Finger":
        return _finger(unwrapped, device, exclude, gates)
    raise ValueError(f"unknown pointer mode {mode!r}")

