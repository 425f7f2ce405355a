"""Geometric primitives shared by every stage.

Conventions: millimetres in the camera frame, origin at the pinhole, +Z into
the scene, +X right, +Y down. Image coordinates are (u, v) = (column, row)
with pixel centres on integer coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput

_UNIT_TOL = 1e-9


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        return np.asarray(x, dtype=float).reshape(3)
    return np.array([x, y, z], dtype=float)


def normalize(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = vec3(self.direction)
        n = np.linalg.norm(d)
        if n == 0 or not np.isfinite(n):
            raise ValueError("ray direction must be non-zero")
        if abs(n - 1.0) > _UNIT_TOL:
            d = d / n
        object.__setattr__(self, "origin", vec3(self.origin))
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "center", vec3(self.center))


@dataclass(frozen=True)
class Plane3D:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", vec3(self.point))
        object.__setattr__(self, "normal", normalize(vec3(self.normal)))

    def signed_distance(self, p) -> float:
        return float(np.dot(vec3(p) - self.point, self.normal))


@dataclass(frozen=True)
class Ellipse2D:
    """Image-space ellipse; ``rotation`` is the angle of the major axis."""

    center: tuple
    a: float
    b: float
    rotation: float

    def __post_init__(self):
        a, b, phi = float(self.a), float(self.b), float(self.rotation)
        if not (a > 0 and b > 0):
            raise ValueError("ellipse axes must be positive")
        if b > a:
            a, b = b, a
            phi += math.pi / 2
        phi = math.fmod(phi, math.pi)
        if phi < 0:
            phi += math.pi
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "rotation", phi)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def scaled(self, s: float) -> "Ellipse2D":
        """Ellipse under an image resize by ``s`` (pixel-centre convention)."""
        u, v = self.center
        return Ellipse2D(((u + 0.5) * s - 0.5, (v + 0.5) * s - 0.5), self.a * s, self.b * s, self.rotation)

    def points(self, n: int = 64, phase: float = 0.0) -> np.ndarray:
        t = phase + np.linspace(0.0, 2 * math.pi, n, endpoint=False)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x, y = self.a * np.cos(t), self.b * np.sin(t)
        return np.column_stack([self.center[0] + c * x - s * y, self.center[1] + s * x + c * y])

    def conic(self) -> np.ndarray:
        """Coefficients (A, B, C, D, E, F) of A u^2 + B uv + C v^2 + D u + E v + F = 0."""
        u0, v0 = self.center
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        ia, ib = 1.0 / self.a**2, 1.0 / self.b**2
        A = c * c * ia + s * s * ib
        B = 2 * c * s * (ia - ib)
        C = s * s * ia + c * c * ib
        D = -2 * A * u0 - B * v0
        E = -B * u0 - 2 * C * v0
        F = A * u0 * u0 + B * u0 * v0 + C * v0 * v0 - 1.0
        return np.array([A, B, C, D, E, F])

    def distance(self, pts) -> np.ndarray:
        """First-order (Sampson) geometric distance of points to the ellipse."""
        return sampson_distance(self.conic(), pts)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        A, B, C, D, E, F = self.conic()
        x, y = pts[:, 0], pts[:, 1]
        return A * x * x + B * x * y + C * y * y + D * x + E * y + F <= 0


def sampson_distance(conic, pts) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    A, B, C, D, E, F = conic
    x, y = pts[:, 0], pts[:, 1]
    q = A * x * x + B * x * y + C * y * y + D * x + E * y + F
    gx = 2 * A * x + B * y + D
    gy = B * x + 2 * C * y + E
    g = np.sqrt(gx * gx + gy * gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(q) / g
    return np.where(g > 0, d, np.inf)


def intersect_ray_sphere(ray: Ray, sphere: Sphere):
    """Nearest non-negative hit as ``(t, point)``, or None."""
    oc = ray.origin - sphere.center
    b = float(np.dot(ray.direction, oc))
    c = float(np.dot(oc, oc)) - sphere.radius**2
    disc = b * b - c
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    t = -b - sq
    if t < 0:
        t = -b + sq
        if t < 0:
            return None
    return t, ray.at(t)


def intersect_ray_plane(ray: Ray, plane: Plane3D):
    denom = float(np.dot(plane.normal, ray.direction))
    if abs(denom) < 1e-12:
        return None
    t = float(np.dot(plane.normal, plane.point - ray.origin)) / denom
    if t < 0:
        return None
    return t, ray.at(t)


def reflect(incident, normal) -> np.ndarray:
    """Mirror reflection ``i - 2 (n.i) n``; works row-wise on (..., 3) arrays."""
    i = np.asarray(incident, dtype=float)
    n = np.asarray(normal, dtype=float)
    return i - 2.0 * np.sum(n * i, axis=-1, keepdims=True) * n


def rotate(v, axis, angle: float) -> np.ndarray:
    """Rodrigues rotation of ``v`` about unit ``axis``."""
    v, k = vec3(v), normalize(vec3(axis))
    c, s = math.cos(angle), math.sin(angle)
    return v * c + np.cross(k, v) * s + k * np.dot(k, v) * (1 - c)


def rays_sphere_hits(origins, dirs, center, radius):
    """Vectorised nearest non-negative ray-sphere distance; NaN where missed."""
    oc = origins - center
    b = np.einsum("...i,...i->...", dirs, oc)
    c = np.einsum("...i,...i->...", oc, oc) - radius * radius
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(disc)
    t = -b - sq
    t = np.where(t >= 0, t, -b + sq)
    return np.where((disc >= 0) & (t >= 0), t, np.nan)


def conic_to_ellipse(conic) -> Ellipse2D:
    A, B, C, D, E, F = (float(x) for x in conic)
    if B * B - 4 * A * C >= 0:
        raise DegenerateInput("conic is not an ellipse")
    M = np.array([[2 * A, B], [B, 2 * C]])
    u0, v0 = np.linalg.solve(M, [-D, -E])
    Fc = A * u0 * u0 + B * u0 * v0 + C * v0 * v0 + D * u0 + E * v0 + F
    lam, vecs = np.linalg.eigh(np.array([[A, B / 2], [B / 2, C]]))
    with np.errstate(divide="ignore", invalid="ignore"):
        ax2 = -Fc / lam
    if not np.all(ax2 > 0) or not np.all(np.isfinite(ax2)):
        raise DegenerateInput("conic has no real points")
    # larger squared axis is the major one
    i_major = int(np.argmax(ax2))
    vx, vy = vecs[:, i_major]
    return Ellipse2D((u0, v0), math.sqrt(ax2[i_major]), math.sqrt(ax2[1 - i_major]), math.atan2(vy, vx))


def fit_conic(points) -> np.ndarray:
    """Direct least-squares ellipse-specific conic fit (Halir-Flusser form).

    Coordinates are centred and scaled before fitting; the returned conic is in
    the original coordinates.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
        raise DegenerateInput("need at least 5 points")
    mean = pts.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((pts - mean) ** 2, axis=1)))
    if not scale > 0:
        raise DegenerateInput("points coincide")
    x = (pts[:, 0] - mean[0]) / scale
    y = (pts[:, 1] - mean[1]) / scale
    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    # x, y, 1 columns are linearly dependent for collinear points
    if abs(np.linalg.det(S3)) < 1e-10 * max(1.0, np.trace(S3)) ** 3:
        raise DegenerateInput("points are collinear")
    T = -np.linalg.solve(S3, S2.T)
    M = S1 + S2 @ T
    M = np.array([M[2] / 2.0, -M[1], M[0] / 2.0])
    try:
        w, v = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInput(str(exc)) from None
    v = np.real(v)
    cond = 4 * v[0] * v[2] - v[1] ** 2
    ok = np.flatnonzero(cond > 0)
    if ok.size == 0:
        raise DegenerateInput("no elliptical solution")
    a1 = v[:, ok[np.argmin(np.abs(np.real(w[ok])))]]
    a2 = T @ a1
    A, B, C = a1
    D, E, F = a2
    # undo normalisation: x = (u - mu) / s
    s, mu, mv = scale, mean[0], mean[1]
    A2, B2, C2 = A / s**2, B / s**2, C / s**2
    D2_ = D / s - 2 * A2 * mu - B2 * mv
    E2_ = E / s - 2 * C2 * mv - B2 * mu
    F2_ = A2 * mu * mu + B2 * mu * mv + C2 * mv * mv - D / s * mu - E / s * mv + F
    conic = np.array([A2, B2, C2, D2_, E2_, F2_])
    return conic / np.linalg.norm(conic)


def ellipse_from_points(points) -> Ellipse2D:
    return conic_to_ellipse(fit_conic(points))
