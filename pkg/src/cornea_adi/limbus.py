"""Eye-region location and RANSAC limbus fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DegenerateInput, EyeNotFound, LimbusNotFound
from .geometry import Ellipse2D, ellipse_from_points, fit_conic, conic_to_ellipse, sampson_distance

WORKING_SIZE = (960, 614)


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 400
    inlier_threshold: float = 1.5
    min_inlier_fraction: float = 0.5
    seed: int = 0
    predefined: int = 32

    def __post_init__(self):
        if self.iterations < 1 or not self.inlier_threshold > 0:
            raise ValueError("need iterations >= 1 and a positive inlier threshold")
        if not 0 <= self.min_inlier_fraction <= 1:
            raise ValueError("min_inlier_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class EyeRegion:
    box: tuple  # (u0, v0, w, h) in full-image pixels
    crop: np.ndarray  # grayscale float crop
    pupil: Ellipse2D  # full-image coordinates

    def __post_init__(self):
        if self.box[2] <= 0 or self.box[3] <= 0:
            raise ValueError("empty eye region")

    @property
    def side(self) -> int:
        return max(self.box[2], self.box[3])

    def to_local(self, pts):
        return np.asarray(pts, float) - np.array(self.box[:2], float)

    def to_image(self, pts):
        return np.asarray(pts, float) + np.array(self.box[:2], float)


def to_gray(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim == 2:
        return img.astype(float)
    return img[..., :3].astype(float) @ np.array([0.299, 0.587, 0.114])


def _blob_ellipse(mask: np.ndarray):
    """Moment-equivalent ellipse of a binary blob (local coordinates)."""
    vs, us = np.nonzero(mask)
    if us.size < 5:
        return None
    mu, mv = us.mean(), vs.mean()
    cov = np.cov(np.vstack([us - mu, vs - mv]))
    lam, vec = np.linalg.eigh(cov)
    if lam[0] <= 0:
        return None
    a, b = 2 * math.sqrt(lam[1]), 2 * math.sqrt(lam[0])
    return Ellipse2D((mu, mv), a, b, math.atan2(vec[1, 1], vec[0, 1]))


def _find_pupil(gray: np.ndarray, dark_threshold: float, min_area: float, max_area: float):
    mask = ndimage.binary_fill_holes(gray <= dark_threshold)
    labels, n = ndimage.label(mask)
    if n == 0:
        return None
    h, w = gray.shape
    best, best_score = None, -np.inf
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = sl
        if ys.start == 0 or xs.start == 0 or ys.stop == h or xs.stop == w:
            continue
        blob = labels[sl] == i
        area = blob.sum()
        if not (min_area <= area <= max_area):
            continue
        e = _blob_ellipse(blob)
        if e is None:
            continue
        fill = area / (math.pi * e.a * e.b)
        if fill < 0.85 or fill > 1.15 or e.b / e.a < 0.5:
            continue
        darkness = 255.0 - gray[sl][blob].mean()
        score = fill * darkness * math.log(area)
        if score > best_score:
            best_score = score
            best = Ellipse2D((e.center[0] + xs.start, e.center[1] + ys.start), e.a, e.b, e.rotation)
    return best


def locate_eye_region(
    image: np.ndarray,
    coarse_roi=None,
    side_multiple: float = 4.15,
    dark_threshold: float = 12.0,
    working_size=WORKING_SIZE,
) -> EyeRegion:
    """Centre a square eye region on the pupil.

    The pupil is the darkest compact blob after thresholding and hole filling;
    the search runs on a frame shrunk to ``working_size`` and is refined at
    full resolution. The region side is ``side_multiple`` pupil diameters.
    """
    gray = to_gray(image)
    if gray.size == 0:
        raise EyeNotFound("empty image")
    H, W = gray.shape
    ox, oy = 0, 0
    if coarse_roi is not None:
        u0, v0, rw, rh = (int(x) for x in coarse_roi)
        if u0 < 0 or v0 < 0 or rw <= 0 or rh <= 0 or u0 + rw > W or v0 + rh > H:
            raise ValueError("coarse ROI outside the image")
        gray_s = gray[v0 : v0 + rh, u0 : u0 + rw]
        ox, oy = u0, v0
    else:
        gray_s = gray
    h, w = gray_s.shape
    s = min(1.0, working_size[0] / w, working_size[1] / h)
    if s < 1.0:
        small = np.asarray(Image.fromarray(gray_s.astype(np.float32)).resize((max(1, round(w * s)), max(1, round(h * s))), Image.BOX))
        sx, sy = small.shape[1] / w, small.shape[0] / h
    else:
        small, sx, sy = gray_s, 1.0, 1.0
    area = small.size
    coarse = _find_pupil(small, dark_threshold, min_area=max(12.0, 2e-4 * area), max_area=0.25 * area)
    if coarse is None:
        raise EyeNotFound("no pupil-like blob")
    cu = (coarse.center[0] + 0.5) / sx - 0.5 + ox
    cv = (coarse.center[1] + 0.5) / sy - 0.5 + oy
    # refine at full resolution in a window around the coarse pupil
    r = 1.6 * coarse.a / min(sx, sy)
    wu0, wv0 = max(0, int(cu - r)), max(0, int(cv - r))
    wu1, wv1 = min(W, int(cu + r) + 2), min(H, int(cv + r) + 2)
    win = gray[wv0:wv1, wu0:wu1]
    mask = ndimage.binary_fill_holes(win <= dark_threshold)
    labels, n = ndimage.label(mask)
    lu, lv = int(round(cu)) - wu0, int(round(cv)) - wv0
    lab = labels[min(max(lv, 0), win.shape[0] - 1), min(max(lu, 0), win.shape[1] - 1)]
    if lab == 0 and n:
        sizes = ndimage.sum(mask, labels, range(1, n + 1))
        lab = int(np.argmax(sizes)) + 1
    fine = _blob_ellipse(labels == lab) if lab else None
    if fine is None:
        raise EyeNotFound("pupil refinement failed")
    pupil = Ellipse2D((fine.center[0] + wu0, fine.center[1] + wv0), fine.a, fine.b, fine.rotation)

    side = int(round(side_multiple * 2 * pupil.a))
    side = max(8, min(side, W, H))
    u0 = int(round(pupil.center[0] - side / 2))
    v0 = int(round(pupil.center[1] - side / 2))
    u0 = min(max(u0, 0), W - side)
    v0 = min(max(v0, 0), H - side)
    return EyeRegion((u0, v0, side, side), gray[v0 : v0 + side, u0 : u0 + side], pupil)


def radial_edge_points(region: EyeRegion, n_rays: int = 360, r_min_factor: float = 1.15):
    """Strongest dark-to-bright transition along rays cast from the pupil centre.

    Returns (N, 2) points in full-image coordinates ordered by ray angle.
    """
    side = region.side
    sigma = max(0.7, 1.5 * side / 1000.0)
    img = ndimage.gaussian_filter(region.crop, sigma)
    cu, cv = region.to_local(region.pupil.center)
    r0 = r_min_factor * region.pupil.a
    r1 = 0.48 * side
    if r1 <= r0 + 2:
        return np.empty((0, 2))
    step = 0.5
    radii = np.arange(r0, r1, step)
    ang = np.arange(n_rays) * (2 * math.pi / n_rays)
    us = cu + np.cos(ang)[:, None] * radii[None, :]
    vs = cv + np.sin(ang)[:, None] * radii[None, :]
    prof = ndimage.map_coordinates(img, [vs.ravel(), us.ravel()], order=1, mode="nearest").reshape(us.shape)
    inside = (us >= 0) & (us <= img.shape[1] - 1) & (vs >= 0) & (vs <= img.shape[0] - 1)
    grad = np.gradient(prof, axis=1)
    grad[~inside] = -np.inf
    k = np.argmax(grad, axis=1)
    gmax = grad[np.arange(n_rays), k]
    # weak maxima are not edges: require a clear step relative to the best rays
    good = np.isfinite(gmax) & (gmax > 0.25 * np.nanmax(np.where(np.isfinite(gmax), gmax, np.nan)))
    good &= (k > 0) & (k < len(radii) - 1)
    rows = np.flatnonzero(good)
    kk = k[rows]
    g0, g1, g2 = grad[rows, kk - 1], grad[rows, kk], grad[rows, kk + 1]
    den = g0 - 2 * g1 + g2
    off = np.where(np.abs(den) > 1e-12, 0.5 * (g0 - g2) / den, 0.0)
    rr = radii[kk] + np.clip(off, -1, 1) * step
    pts = np.column_stack([cu + np.cos(ang[rows]) * rr, cv + np.sin(ang[rows]) * rr])
    return region.to_image(pts)


def _plausible(e: Ellipse2D, r_lo: float, r_hi: float) -> bool:
    return r_lo <= e.b and e.a <= r_hi and e.b / e.a >= 0.3


def ransac_ellipse(points, cfg: RansacConfig, threshold: float | None = None, axis_range=(0.0, np.inf)):
    """Robust ellipse from ordered edge points.

    The first ``cfg.predefined`` hypotheses use 5-tuples spread evenly along
    the point order (i.e. in angle around the pupil); the rest are random.
    Returns ``(ellipse, inlier_fraction)``.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 5:
        raise LimbusNotFound("too few edge points")
    thr = cfg.inlier_threshold if threshold is None else threshold
    rng = np.random.default_rng(cfg.seed)
    best_count, best_cost, best_mask = -1, np.inf, None
    n_pre = min(cfg.predefined, cfg.iterations)
    max_it = cfg.iterations
    for it in range(cfg.iterations):
        if it < n_pre:
            start = (it * n) // (5 * max(n_pre, 1))
            idx = (start + (np.arange(5) * n) // 5) % n
        else:
            idx = rng.choice(n, size=5, replace=False)
        try:
            conic = fit_conic(pts[idx])
            e = conic_to_ellipse(conic)
        except (DegenerateInput, np.linalg.LinAlgError):
            continue
        if not _plausible(e, *axis_range):
            continue
        d = sampson_distance(e.conic(), pts)
        mask = d <= thr
        count = int(mask.sum())
        cost = float(np.sum(np.minimum(d, thr)))
        if count > best_count or (count == best_count and cost < best_cost):
            best_count, best_cost, best_mask = count, cost, mask
            w = count / n
            # adaptive stop: chance of never drawing an all-inlier sample < 1e-6
            need = cfg.iterations if w <= 0 else (0 if w >= 1 else math.log(1e-6) / math.log(1.0 - w**5))
            max_it = max(n_pre, min(cfg.iterations, int(math.ceil(need))))
        if it + 1 >= max_it:
            break
    if best_mask is None or best_count < 5:
        raise LimbusNotFound("no consistent ellipse")
    mask = best_mask
    ellipse = None
    for _ in range(3):
        try:
            ellipse = ellipse_from_points(pts[mask])
        except DegenerateInput:
            break
        new_mask = ellipse.distance(pts) <= thr
        if new_mask.sum() < 5 or np.array_equal(new_mask, mask):
            mask = new_mask if new_mask.sum() >= 5 else mask
            break
        mask = new_mask
    if ellipse is None:
        raise LimbusNotFound("refit failed")
    frac = float(mask.sum()) / n
    if frac < cfg.min_inlier_fraction:
        raise LimbusNotFound(f"inlier fraction {frac:.2f} below {cfg.min_inlier_fraction}")
    return ellipse, frac


def detect_limbus(region: EyeRegion, cfg: RansacConfig = RansacConfig(), n_rays: int = 360):
    """Limbus ellipse (full-image coordinates) and its RANSAC inlier fraction."""
    pts = radial_edge_points(region, n_rays=n_rays)
    if len(pts) < 5:
        raise LimbusNotFound("no edge points")
    thr = max(cfg.inlier_threshold * region.side / 1000.0, 0.35)
    return ransac_ellipse(pts, cfg, threshold=thr, axis_range=(region.pupil.a * 1.05, 0.6 * region.side))
