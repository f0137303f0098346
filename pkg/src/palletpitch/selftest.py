"""Fast property checks runnable without pytest (``palletpitch selftest``).

Each check returns ``(name, passed, detail)``. Everything here is pure
geometry and arithmetic, so the whole run takes a few seconds.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .edges import EdgeMap, PredictedRegion, hough_direction
from .errors import PoleAmbiguity
from .geometry import (
    angle_between,
    axis_angle,
    default_camera,
    pitch_yaw_rotation,
    pixel_to_ray,
    project_ray_to_pixel,
    rotation_from_axes,
    unit,
)
from .panorama import PanoramaSpec, pano_pixel_to_ray, ray_to_pano_pixel
from .tolerance import InsertionGeometry, reach_height_coupling, safe_mask

# (dz_mm, dtheta_deg) of the sixteen field trials that reached the pallet
FIELD_TRIAL_ERRORS = (
    (-5.731, 0.1421), (-10.305, 0.25094), (-9.367, 0.06245),
    (-20.794, 0.1459), (-14.992, 0.193943), (-13.451, 0.02031),
    (-10.328, 0.02478), (-14.307, -0.10579), (-10.469, -0.14688),
    (-0.119, 0.11497), (-1.004, 0.374245), (-1.682, 0.07566),
    (-4.473, 0.36217), (-4.832, 0.454237), (-5.462, 0.57724),
    (-0.746, 0.53912),
)


def check_coupling():
    v = reach_height_coupling(20.0, 1.0)
    return "reach-height coupling", abs(v - 0.3491) <= 1e-4, f"{v:.6f} mm"


def check_field_trials():
    g = InsertionGeometry()
    dz, th = np.array(FIELD_TRIAL_ERRORS).T
    ok = safe_mask(g, dz, th)
    edge = (not safe_mask(g, 0.0, 1.5)) and (not safe_mask(g, 27.0, 0.0)) and bool(safe_mask(g, 26.9, 0.0))
    return "field-trial errors safe", bool(ok.all()) and edge, f"{int(ok.sum())}/16 safe, boundaries {'ok' if edge else 'wrong'}"


def check_projection_round_trip(n=1000, seed=0):
    cam = default_camera()
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, cam.theta_max, n)
    phi = rng.uniform(-math.pi, math.pi, n)
    rays = np.stack([np.cos(theta), np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi)], -1)
    u, v = project_ray_to_pixel(cam, rays)
    inside = cam.in_image(u, v)
    _, back = pixel_to_ray(cam, np.stack([u[inside], v[inside]], -1))
    err = max(angle_between(a, b) for a, b in zip(rays[inside], back))
    return "projection round trip", err <= 1e-6, f"max {err:.2e} rad"


def check_panorama_round_trip(n=1000, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for axis in ("x", "y", "z"):
        spec = PanoramaSpec.about(axis)
        u = rng.uniform(0.0, spec.width - 1, n)
        v = rng.uniform(0.5, spec.height - 1.5, n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PoleAmbiguity)
            uu, vv = ray_to_pano_pixel(spec, pano_pixel_to_ray(spec, u, v))
        worst = max(worst, float(np.max(np.hypot(uu - u, vv - v))))
    return "panorama round trip", worst <= 1e-6, f"max {worst:.2e} px"


def check_symmetry():
    g = InsertionGeometry()
    th = np.round(np.arange(-3.0, 3.0 + 1e-9, 0.05), 10)
    dz = np.arange(-30.0, 31.0, 1.0)
    T, Z = np.meshgrid(th, dz)
    same = np.array_equal(safe_mask(g, Z, T), safe_mask(g, -Z, -T))
    return "tolerance point symmetry", same, f"{T.size} grid points"


def check_rotations(n=200, seed=2):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        a = axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi))
        b = pitch_yaw_rotation(*rng.uniform(-90, 90, 2))
        p, s = rng.normal(size=3), rng.normal(size=3)
        c = rotation_from_axes(p, s)
        for R in (a, b, c, a @ b @ c):
            worst = max(worst, float(np.abs(R.T @ R - np.eye(3)).max()),
                        abs(float(np.linalg.det(R)) - 1.0))
    return "rotations orthonormal", worst <= 1e-9, f"max deviation {worst:.1e}"


def check_hough_meridian():
    # two exact meridians of a line family tilted off the pole
    spec = PanoramaSpec.about("z")
    d = unit([math.sin(math.radians(3.0)), math.sin(math.radians(-2.0)), 1.0])
    maps = []
    for y0 in (600.0, -600.0):
        p = np.array([1500.0, y0, 0.0])
        pts = p + np.linspace(-400, 400, 200)[:, None] * d
        u, v = ray_to_pano_pixel(spec, unit(pts))
        ui, vi = np.rint(u), np.rint(v)
        region = PredictedRegion(int(ui.min()) - 8, int(ui.max()) + 8, int(vi.min()) - 8,
                                 int(vi.max()) + 8, float(vi.max() - vi.min()))
        maps.append(EdgeMap.from_pixels(spec, region, ui, vi))
    det = hough_direction(maps[0], maps[1], spec.pole)
    err = math.degrees(min(angle_between(det.direction, d), angle_between(-det.direction, d)))
    return "hough direction", err <= 0.2, f"error {err:.3f} deg"


CHECKS = (check_coupling, check_field_trials, check_projection_round_trip,
          check_panorama_round_trip, check_symmetry, check_rotations, check_hough_meridian)


def run_selftest() -> list:
    out = []
    for fn in CHECKS:
        try:
            out.append(fn())
        except Exception as exc:  # a crash is a failed check, not an abort
            out.append((fn.__name__, False, f"{type(exc).__name__}: {exc}"))
    return out
