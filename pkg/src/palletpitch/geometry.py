"""Coordinate frames, rigid transforms and the polynomial fisheye camera.

Frame conventions
-----------------
Camera: origin at the reference viewpoint, X along the optical axis, Z up,
Y completing a right-handed system (left). Image u grows to the right and v
downwards, so a ray with negative Y lands right of the principal point.

Fork: origin midway between the fork tips, Y along the tip-to-tip line,
Z normal to the fork top surface, X pointing out of the forks.

All lengths are millimetres. Angles are degrees at public boundaries and
radians internally unless a name ends in ``_deg``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateAxes,
    FrameMismatch,
    NonInvertibleModel,
    OutOfFieldOfView,
    OutOfImage,
)

FRAMES = ("camera", "fork", "pallet", "panel")

REFERENCE_ANGLE_DEG = 45.0


# ---------------------------------------------------------------------------
# vectors and rotations


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("cannot normalise a zero vector")
    return v / n


def angle_between(a, b) -> float:
    """Angle in radians between two vectors, robust near 0 and pi."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(math.atan2(np.linalg.norm(np.cross(a, b)), float(np.dot(a, b))))


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about ``axis`` by ``angle`` radians."""
    k = unit(axis)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def pitch_yaw_rotation(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    """Attitude of a level-referenced object: yaw about Z, then pitch.

    Positive pitch raises the object's +X end, i.e. the returned matrix maps
    X to ``(cos p cos y, cos p sin y, sin p)``.
    """
    return rot_z(math.radians(yaw_deg)) @ rot_y(-math.radians(pitch_deg))


def rotation_angle(R) -> float:
    """Rotation magnitude in radians of a rotation matrix."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, c))))


def check_rotation(R, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol) or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix is not a proper rotation")
    return R


def orthonormalize(R) -> np.ndarray:
    """Nearest proper rotation (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


def rotation_from_axes(primary, secondary, axis_labels: Sequence[str] = ("x", "y"),
                       min_angle_deg: float = 1.0) -> np.ndarray:
    """Build a rotation whose columns are the object axes seen in another frame.

    ``primary`` is kept exactly (after normalisation), ``secondary`` is
    Gram-Schmidt orthogonalised against it and the remaining axis is their
    right-handed completion. ``axis_labels`` names which object axes the two
    inputs are, e.g. ``("x", "y")``.
    """
    i, j = (_AXIS_INDEX[a.lower()] for a in axis_labels)
    if i == j:
        raise ValueError("axis labels must differ")
    p = unit(primary)
    s = unit(secondary)
    if angle_between(p, s) < math.radians(min_angle_deg) or \
            angle_between(p, -s) < math.radians(min_angle_deg):
        raise DegenerateAxes("primary and secondary axes are (nearly) parallel")
    s = unit(s - np.dot(s, p) * p)
    k = 3 - i - j
    cols = [None, None, None]
    cols[i] = p
    cols[j] = s
    # right-handed completion: e_k = e_{k+1} x e_{k+2}
    cols[k] = np.cross(cols[(k + 1) % 3], cols[(k + 2) % 3])
    R = np.column_stack(cols)
    return check_rotation(R)


# ---------------------------------------------------------------------------
# rigid transforms


@dataclass(frozen=True, eq=False)
class Point:
    xyz: np.ndarray
    frame: str


@dataclass(frozen=True, eq=False)
class Direction:
    xyz: np.ndarray
    frame: str


@dataclass(frozen=True, eq=False)
class Pose:
    """Object frame expressed in ``frame``: columns of ``rotation`` are its axes."""

    position: np.ndarray
    rotation: np.ndarray
    frame: str


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Maps coordinates from ``from_frame`` into ``to_frame``: p' = R p + t."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    from_frame: str = "camera"
    to_frame: str = "fork"

    def __post_init__(self):
        R = check_rotation(self.rotation)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        for tag in (self.from_frame, self.to_frame):
            if tag not in FRAMES:
                raise ValueError(f"unknown frame tag {tag!r}")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def apply_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.T + self.translation

    def apply_directions(self, dirs) -> np.ndarray:
        return np.asarray(dirs, dtype=float) @ self.rotation.T

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation, self.to_frame, self.from_frame)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self after other``: apply ``other`` first."""
        if other.to_frame != self.from_frame:
            raise FrameMismatch(f"cannot chain {other.to_frame} into {self.from_frame}")
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation,
                              other.from_frame, self.to_frame)

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation_mm": self.translation.tolist(),
            "from": self.from_frame,
            "to": self.to_frame,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        R = orthonormalize(np.asarray(d["rotation"], dtype=float).reshape(3, 3))
        return cls(R, d["translation_mm"], d.get("from", "camera"), d.get("to", "fork"))


def transform_pose(T: RigidTransform, obj):
    """Re-express a tagged point, direction or pose in ``T.to_frame``."""
    if obj.frame != T.from_frame:
        raise FrameMismatch(f"transform expects {T.from_frame!r}, got {obj.frame!r}")
    if isinstance(obj, Point):
        return Point(T.apply_points(obj.xyz), T.to_frame)
    if isinstance(obj, Direction):
        return Direction(T.apply_directions(obj.xyz), T.to_frame)
    if isinstance(obj, Pose):
        return Pose(T.apply_points(obj.position), T.rotation @ obj.rotation, T.to_frame)
    raise TypeError(f"cannot transform {type(obj).__name__}")


# ---------------------------------------------------------------------------
# camera model


@dataclass(frozen=True)
class ViewpointShiftCurve:
    """Axial displacement of the effective viewpoint versus incidence angle.

    Piecewise linear in angle, clamped outside the sampled range. Positive
    offsets move the viewpoint forward along the optical axis.
    """

    angles_deg: tuple
    offsets_mm: tuple

    def __post_init__(self):
        a = tuple(float(x) for x in self.angles_deg)
        o = tuple(float(x) for x in self.offsets_mm)
        object.__setattr__(self, "angles_deg", a)
        object.__setattr__(self, "offsets_mm", o)
        if len(a) != len(o) or len(a) == 0:
            raise ValueError("shift curve needs matching, non-empty samples")
        if any(b <= c for c, b in zip(a, a[1:])):
            raise ValueError("shift curve angles must be strictly increasing")
        if not all(math.isfinite(x) for x in o):
            raise ValueError("shift curve offsets must be finite")
        if abs(self.offset_deg(REFERENCE_ANGLE_DEG)) > 1e-9:
            raise ValueError("shift curve must be zero at the 45 degree reference angle")

    @classmethod
    def from_pairs(cls, pairs) -> "ViewpointShiftCurve":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def offset_deg(self, angle_deg):
        return np.interp(angle_deg, self.angles_deg, self.offsets_mm)

    def offset(self, theta):
        """Offset in mm for incidence angle(s) in radians."""
        return np.interp(np.degrees(theta), self.angles_deg, self.offsets_mm)

    def scaled(self, factor: float) -> "ViewpointShiftCurve":
        return ViewpointShiftCurve(self.angles_deg, tuple(factor * o for o in self.offsets_mm))

    def to_pairs(self) -> list:
        return [[a, o] for a, o in zip(self.angles_deg, self.offsets_mm)]


@dataclass(frozen=True)
class CameraModel:
    """Radial polynomial fisheye: image radius rho = sum k_i theta^i (theta in rad)."""

    width: int
    height: int
    cx: float
    cy: float
    poly: tuple
    affine: tuple = (1.0, 0.0, 0.0)
    theta_max_deg: float = 95.0
    shift_curve: ViewpointShiftCurve | None = None

    def __post_init__(self):
        object.__setattr__(self, "poly", tuple(float(k) for k in self.poly))
        object.__setattr__(self, "affine", tuple(float(k) for k in self.affine))
        if len(self.poly) < 2:
            raise ValueError("polynomial needs at least k0 and k1")
        if abs(self.poly[0]) > 1e-12:
            raise ValueError("rho(0) must be 0 (k0 = 0)")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @property
    def theta_max(self) -> float:
        return math.radians(self.theta_max_deg)

    @cached_property
    def _affine_inv(self) -> np.ndarray:
        c, d, e = self.affine
        return np.linalg.inv(np.array([[c, d], [e, 1.0]]))

    @cached_property
    def is_invertible(self) -> bool:
        th = np.linspace(0.0, self.theta_max, 4097)
        return bool(np.all(np.diff(self.rho(th)) > 0))

    def rho(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for k in reversed(self.poly):
            out = out * theta + k
        return out

    @cached_property
    def rho_max(self) -> float:
        return float(self.rho(self.theta_max))

    def theta_from_rho(self, rho, tol: float = 1e-9):
        """Invert rho(theta) by vectorised bisection on [0, theta_max].

        Radii beyond rho(theta_max) give NaN.
        """
        if not self.is_invertible:
            raise NonInvertibleModel("rho(theta) is not strictly increasing on [0, theta_max]")
        rho = np.asarray(rho, dtype=float)
        lo = np.zeros_like(rho)
        hi = np.full_like(rho, self.theta_max)
        n_iter = int(math.ceil(math.log2(self.theta_max / tol))) + 1
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = self.rho(mid) < rho
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        theta = 0.5 * (lo + hi)
        return np.where(rho > self.rho_max * (1 + 1e-12), np.nan, theta)

    def shift_offset(self, theta):
        if self.shift_curve is None:
            return np.zeros_like(np.asarray(theta, dtype=float))
        return self.shift_curve.offset(theta)

    def in_image(self, u, v):
        u = np.asarray(u)
        v = np.asarray(v)
        return (u >= -0.5) & (u <= self.width - 0.5) & (v >= -0.5) & (v <= self.height - 0.5)

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        c, d, e = self.affine
        out = {
            "width": self.width, "height": self.height, "cx": self.cx, "cy": self.cy,
            "poly": list(self.poly), "affine": {"c": c, "d": d, "e": e},
            "theta_max_deg": self.theta_max_deg,
        }
        if self.shift_curve is not None:
            out["shift_curve"] = self.shift_curve.to_pairs()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        aff = d.get("affine", {"c": 1.0, "d": 0.0, "e": 0.0})
        curve = d.get("shift_curve")
        return cls(
            width=int(d["width"]), height=int(d["height"]),
            cx=float(d["cx"]), cy=float(d["cy"]),
            poly=tuple(d["poly"]),
            affine=(aff["c"], aff["d"], aff["e"]),
            theta_max_deg=float(d.get("theta_max_deg", 95.0)),
            shift_curve=ViewpointShiftCurve.from_pairs(curve) if curve else None,
        )

    def without_shift(self) -> "CameraModel":
        return CameraModel(self.width, self.height, self.cx, self.cy, self.poly,
                           self.affine, self.theta_max_deg, None)

    def with_shift(self, curve: ViewpointShiftCurve | None) -> "CameraModel":
        return CameraModel(self.width, self.height, self.cx, self.cy, self.poly,
                           self.affine, self.theta_max_deg, curve)


def incidence_angle(rays) -> np.ndarray:
    rays = np.asarray(rays, dtype=float)
    return np.arctan2(np.hypot(rays[..., 1], rays[..., 2]), rays[..., 0])


def project_ray_to_pixel(camera: CameraModel, ray, strict: bool = True):
    """Project camera-frame direction(s) to pixel coordinates.

    Accepts a single vector or an ``(..., 3)`` array and returns ``(u, v)``.
    With ``strict=False`` rays outside ``theta_max`` yield NaN instead of
    raising :class:`OutOfFieldOfView`.
    """
    ray = np.asarray(ray, dtype=float)
    y, z = ray[..., 1], ray[..., 2]
    r_perp = np.hypot(y, z)
    theta = np.arctan2(r_perp, ray[..., 0])
    outside = theta > camera.theta_max + 1e-12
    if strict and np.any(outside):
        raise OutOfFieldOfView("ray incidence exceeds theta_max")
    rho = camera.rho(theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r_perp > 0, rho / np.where(r_perp > 0, r_perp, 1.0), 0.0)
    mx = -y * scale
    my = -z * scale
    c, d, e = camera.affine
    u = c * mx + d * my + camera.cx
    v = e * mx + my + camera.cy
    if np.any(outside):
        u = np.where(outside, np.nan, u)
        v = np.where(outside, np.nan, v)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def project_points(camera: CameraModel, pts, use_shift: bool = False):
    """Project camera-frame 3D points, optionally honouring viewpoint shift.

    The shift correction is applied once: the offset is looked up at the
    incidence angle seen from the reference viewpoint and the ray is re-cast
    from the displaced viewpoint.
    """
    pts = np.asarray(pts, dtype=float)
    if use_shift and camera.shift_curve is not None:
        theta0 = incidence_angle(pts)
        s = camera.shift_curve.offset(theta0)
        pts = pts.copy()
        pts[..., 0] = pts[..., 0] - s
    return project_ray_to_pixel(camera, pts, strict=False)


def pixel_to_ray(camera: CameraModel, pixel, use_shift: bool = False, strict: bool = True):
    """Back-project pixel(s) to ``(origin_offset, direction)``.

    ``pixel`` is ``(u, v)`` or an ``(..., 2)`` array. The origin offset is the
    viewpoint displacement along the optical axis when ``use_shift`` is set,
    otherwise zero.
    """
    pix = np.asarray(pixel, dtype=float)
    u, v = pix[..., 0], pix[..., 1]
    if strict and not np.all(camera.in_image(u, v)):
        raise OutOfImage("pixel lies outside the image")
    inv = camera._affine_inv
    du = u - camera.cx
    dv = v - camera.cy
    mx = inv[0, 0] * du + inv[0, 1] * dv
    my = inv[1, 0] * du + inv[1, 1] * dv
    rho = np.hypot(mx, my)
    theta = camera.theta_from_rho(rho)
    if strict and np.any(np.isnan(theta)):
        raise OutOfFieldOfView("pixel lies outside the lens field of view")
    with np.errstate(invalid="ignore", divide="ignore"):
        inv_rho = np.where(rho > 0, 1.0 / np.where(rho > 0, rho, 1.0), 0.0)
    st = np.sin(theta)
    direction = np.stack([np.cos(theta), -st * mx * inv_rho, -st * my * inv_rho], axis=-1)
    origin = np.zeros_like(direction)
    if use_shift:
        origin[..., 0] = camera.shift_offset(theta)
    return origin, direction


def default_shift_curve() -> ViewpointShiftCurve:
    """Two-anchor curve: zero at the 45 degree reference, 10 mm at 80 degrees."""
    return ViewpointShiftCurve((45.0, 80.0), (0.0, 10.0))


def default_camera(size: int = 1600, focal: float = 480.0, shift: bool = True) -> CameraModel:
    """Equidistant synthetic lens used by the scenario defaults."""
    c = (size - 1) / 2.0
    return CameraModel(size, size, c, c, (0.0, focal), theta_max_deg=95.0,
                       shift_curve=default_shift_curve() if shift else None)
