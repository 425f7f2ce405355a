"""Metric interaction plane from the device's reflected rays.

The device's left, centre and right key points give three reflected rays.
A candidate plane slides along the central ray; the left and right ray hits
on it move affinely with the slide parameter ``t``, so requiring them to be
exactly the device width apart is a quadratic in ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergentRays, NoIntersection, NoSolution
from .geometry import Plane3D, Ray, intersect_ray_plane, normalize, vec3
from .scene import DetectedObject
from .unwrap import UnwrappedCornea, unwrapped_to_ray


@dataclass(frozen=True)
class DevicePlane:
    plane: Plane3D
    origin: np.ndarray  # reconstructed device centre
    x_axis: np.ndarray  # along the device width, towards the right edge
    y_axis: np.ndarray  # in-plane, pointing up
    device_dims: tuple
    t: float = float("nan")  # slide distance along the central ray


@dataclass(frozen=True)
class PlaneCoords:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("plane coordinates must be finite")


@dataclass
class ReconstructionFrame:
    rays_L: Ray
    rays_C: Ray
    rays_R: Ray
    L_E: np.ndarray = None
    C_E: np.ndarray = None
    R_E: np.ndarray = None
    L_C: np.ndarray = None  # L moved along the central direction onto the plane
    R_C: np.ndarray = None
    L_R: np.ndarray = None  # L mirrored across the central line
    L_M: np.ndarray = None  # L_E mirrored across the central line


def _mirror_across_line(p, o, d):
    foot = o + np.dot(p - o, d) * d
    return 2 * foot - p


def _affine_hit(ray: Ray, o_c, d_c, n):
    """Hit of ``ray`` with the plane through o_c + t d_c (normal n) as A + t B."""
    den = float(np.dot(ray.direction, n))
    if abs(den) < 1e-12:
        raise NoSolution("ray parallel to the candidate planes")
    A = ray.origin + (np.dot(o_c - ray.origin, n) / den) * ray.direction
    B = (np.dot(d_c, n) / den) * ray.direction
    return A, B


def solve_plane_from_rays(ray_L: Ray, ray_C: Ray, ray_R: Ray, width: float, normal=None):
    """Smallest t >= 0 at which the L and R hits are ``width`` apart.

    Returns ``(t, plane, frame)``. ``normal`` defaults to minus the central
    ray direction.
    """
    if not width > 0:
        raise ValueError("device width must be positive")
    o_c, d_c = ray_C.origin, ray_C.direction
    n = -d_c if normal is None else normalize(vec3(normal))
    if abs(np.dot(n, d_c)) < 1e-9:
        raise NoSolution("plane normal is orthogonal to the central ray")
    AL, BL = _affine_hit(ray_L, o_c, d_c, n)
    AR, BR = _affine_hit(ray_R, o_c, d_c, n)
    a0, a1 = AR - AL, BR - BL
    qa = float(a1 @ a1)
    qb = 2.0 * float(a0 @ a1)
    qc = float(a0 @ a0) - width * width
    if qa < 1e-18:
        raise NoSolution("left and right rays do not separate")
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        raise DivergentRays("the device width is never reached")
    sq = math.sqrt(disc)
    # numerically stable roots
    q = -0.5 * (qb + math.copysign(sq, qb))
    roots = [q / qa] + ([qc / q] if q != 0 else [])
    roots = sorted(r for r in roots if r >= 0)
    if not roots:
        raise NoSolution("no non-negative plane distance")
    t = roots[0]
    C_E = o_c + t * d_c
    L_E, R_E = AL + t * BL, AR + t * BR
    plane = Plane3D(C_E, n)
    fr = ReconstructionFrame(ray_L, ray_C, ray_R, L_E, C_E, R_E)
    s_L = np.dot(C_E - ray_L.origin, n) / np.dot(d_c, n)
    s_R = np.dot(C_E - ray_R.origin, n) / np.dot(d_c, n)
    fr.L_C = ray_L.origin + s_L * d_c
    fr.R_C = ray_R.origin + s_R * d_c
    fr.L_R = _mirror_across_line(ray_L.origin, o_c, d_c)
    fr.L_M = _mirror_across_line(L_E, o_c, d_c)
    return t, plane, fr


def device_plane_from_frame(t, plane: Plane3D, fr: ReconstructionFrame, dims) -> DevicePlane:
    x = fr.R_E - fr.L_E
    x = normalize(x - np.dot(x, plane.normal) * plane.normal)
    # plane.normal faces the eye; (-normal) x x is the in-plane "up"
    y = np.cross(-plane.normal, x)
    return DevicePlane(plane, fr.C_E, x, normalize(y), tuple(dims), float(t))


def _key_rays(device: DetectedObject, unwrapped: UnwrappedCornea):
    rays = [unwrapped_to_ray(unwrapped, p) for p in (device.left, device.center, device.right)]
    if any(r is None for r in rays):
        raise NoSolution("device key pixel outside the corneal cap")
    return rays


def solve_device_plane(
    device: DetectedObject,
    unwrapped: UnwrappedCornea,
    device_dims,
    normal_mode: str = "reflection",
    return_frame: bool = False,
):
    """Metric device plane from the detection; ``normal_mode`` is reflection or gaze."""
    rL, rC, rR = _key_rays(device, unwrapped)
    if normal_mode == "reflection":
        normal = None
    elif normal_mode == "gaze":
        normal = unwrapped.pose.gaze
    else:
        raise ValueError(f"unknown normal mode {normal_mode!r}")
    t, plane, fr = solve_plane_from_rays(rL, rC, rR, float(device_dims[0]), normal)
    dp = device_plane_from_frame(t, plane, fr, device_dims)
    return (dp, fr) if return_frame else dp


def locate_pointer_on_plane(plane: DevicePlane, pointer_ray: Ray) -> PlaneCoords:
    hit = intersect_ray_plane(pointer_ray, plane.plane)
    if hit is None:
        raise NoIntersection("pointer ray misses the device plane")
    rel = hit[1] - plane.origin
    return PlaneCoords(float(rel @ plane.x_axis), float(rel @ plane.y_axis))


def pixel_space_offset(device: DetectedObject, pointer: DetectedObject, space: str = "unwrapped"):
    """Pointer centre minus device centre; ``space`` records which pixel grid."""
    if space not in ("unwrapped", "image"):
        raise ValueError(f"unknown pixel space {space!r}")
    return (pointer.center[0] - device.center[0], pointer.center[1] - device.center[1])
