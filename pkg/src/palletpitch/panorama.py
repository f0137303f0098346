"""Equirectangular panoramas about an arbitrary pseudo-vertical axis.

A 3D line parallel to the panorama pole projects onto a single column
(a meridian), which is what makes the line-direction search tractable.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import DimensionMismatch, OutOfBounds, PoleAmbiguity
from .geometry import CameraModel, project_ray_to_pixel, unit

_POLE_EPS = 1e-12


@dataclass(frozen=True)
class PanoramaSpec:
    pole: tuple
    reference: tuple
    width: int = 2048
    height: int = 1024

    def __post_init__(self):
        a = tuple(float(x) for x in unit(self.pole))
        b = tuple(float(x) for x in unit(self.reference))
        object.__setattr__(self, "pole", a)
        object.__setattr__(self, "reference", b)
        if abs(np.dot(a, b)) > 1e-9:
            raise ValueError("pole and reference axes must be orthogonal")
        if self.width != 2 * self.height:
            raise ValueError("full-sphere panorama needs width == 2 * height")

    @property
    def basis(self) -> np.ndarray:
        """Rows: pole a, reference b, a x b."""
        a = np.array(self.pole)
        b = np.array(self.reference)
        return np.stack([a, b, np.cross(a, b)])

    @classmethod
    def about(cls, axis: str, width: int = 2048, height: int = 1024) -> "PanoramaSpec":
        """Standard camera-axis panoramas with the longitude origin facing the target."""
        pole, ref = {
            "z": ((0, 0, 1), (1, 0, 0)),
            "x": ((1, 0, 0), (0, 0, -1)),
            "y": ((0, 1, 0), (1, 0, 0)),
        }[axis.lower()]
        return cls(pole, ref, width, height)


@dataclass(frozen=True, eq=False)
class PanoramaImage:
    spec: PanoramaSpec
    intensity: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        shape = (self.spec.height, self.spec.width)
        if self.intensity.shape != shape or self.valid.shape != shape:
            raise DimensionMismatch("panorama arrays do not match the spec")


def pano_pixel_to_ray(spec: PanoramaSpec, u, v, strict: bool = True) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if strict and (np.any(u < 0) or np.any(u >= spec.width) or np.any(v < 0) or np.any(v >= spec.height)):
        raise OutOfBounds("panorama pixel outside the image")
    lon = 2.0 * math.pi * (u + 0.5) / spec.width - math.pi
    lat = math.pi / 2.0 - math.pi * (v + 0.5) / spec.height
    a, b, c = spec.basis
    cl = np.cos(lat)
    return (np.sin(lat)[..., None] * a
            + (cl * np.cos(lon))[..., None] * b
            + (cl * np.sin(lon))[..., None] * c)


def ray_longitude_latitude(spec: PanoramaSpec, ray):
    ray = np.asarray(ray, dtype=float)
    a, b, c = spec.basis
    sa = np.clip(ray @ a, -1.0, 1.0)
    lon = np.arctan2(ray @ c, ray @ b)
    lat = np.arcsin(sa)
    return lon, lat, np.abs(sa) > 1.0 - _POLE_EPS


def ray_to_pano_pixel(spec: PanoramaSpec, ray):
    """Inverse of :func:`pano_pixel_to_ray` for unit ray(s).

    Rays on the pole have no longitude; ``u`` is set to 0 and a
    :class:`PoleAmbiguity` warning is issued.
    """
    lon, lat, pole = ray_longitude_latitude(spec, ray)
    u = (lon + math.pi) * spec.width / (2.0 * math.pi) - 0.5
    v = (math.pi / 2.0 - lat) * spec.height / math.pi - 0.5
    if np.any(pole):
        warnings.warn("ray is along the panorama pole; longitude set to 0", PoleAmbiguity,
                      stacklevel=2)
        u = np.where(pole, 0.0, u)
    if np.ndim(u) == 0:
        return float(u), float(v)
    return u, v


@lru_cache(maxsize=8)
def _sampling_map(camera: CameraModel, spec: PanoramaSpec):
    vv, uu = np.mgrid[0:spec.height, 0:spec.width].astype(float)
    rays = pano_pixel_to_ray(spec, uu, vv)
    pu, pv = project_ray_to_pixel(camera, rays, strict=False)
    valid = np.isfinite(pu) & camera.in_image(np.nan_to_num(pu, nan=-1e9), np.nan_to_num(pv, nan=-1e9))
    pu = np.where(valid, pu, 0.0).astype(np.float32)
    pv = np.where(valid, pv, 0.0).astype(np.float32)
    return pu, pv, valid


def build_panorama(image: np.ndarray, camera: CameraModel, spec: PanoramaSpec) -> PanoramaImage:
    """Resample a wide-angle grayscale image into an equirectangular panorama.

    Bilinear interpolation; samples within half a pixel of the image border
    fall back to the nearest pixel. Rays outside the lens field or the image
    are masked and set to 0.
    """
    image = np.asarray(image)
    if image.ndim != 2 or image.shape != (camera.height, camera.width):
        raise DimensionMismatch(
            f"image shape {image.shape} does not match camera {camera.height}x{camera.width}")
    pu, pv, valid = _sampling_map(camera, spec)
    sampled = map_coordinates(image.astype(np.float32), [pv, pu], order=1, mode="nearest")
    out = np.where(valid, np.clip(np.rint(sampled), 0, 255), 0).astype(np.uint8)
    return PanoramaImage(spec, out, valid.copy())
