import math
from functools import lru_cache

import numpy as np
import pytest

from palletpitch.geometry import CameraModel, ViewpointShiftCurve, default_camera
from palletpitch.specs import CargoBox, PalletSpec, PanelSpec
from palletpitch.synthetic import SyntheticScene, render_scene


@pytest.fixture(scope="session")
def camera():
    return default_camera()


@pytest.fixture(scope="session")
def equidistant():
    # k = [0, 500], principal point (960, 960)
    return CameraModel(1921, 1921, 960.0, 960.0, (0.0, 500.0), theta_max_deg=95.0,
                       shift_curve=ViewpointShiftCurve((45.0, 80.0), (0.0, 10.0)))


@lru_cache(maxsize=None)
def rendered_pallet(loaded: bool, pitch: float = 1.65, position=(201.0, 0.0, 355.0),
                    yaw: float = 0.0, background: str = "uniform"):
    scene = SyntheticScene(pallet=PalletSpec(cargo=CargoBox()), pallet_position=position,
                           pallet_pitch_deg=pitch, pallet_yaw_deg=yaw, loaded=loaded,
                           background=background)
    img, truth = render_scene(scene, default_camera())
    return scene, img, truth


@lru_cache(maxsize=None)
def rendered_panel(use_shift: bool = True):
    scene = SyntheticScene(pallet=None, panel=PanelSpec(), use_shift=use_shift)
    img, truth = render_scene(scene, default_camera())
    return scene, img, truth


def ray_at(theta_deg, azimuth_deg):
    """Camera-frame unit ray at incidence ``theta`` and image azimuth (0 = +u, 90 = +v)."""
    t, a = math.radians(theta_deg), math.radians(azimuth_deg)
    # +u is camera -Y, +v is camera -Z
    return np.array([math.cos(t), -math.sin(t) * math.cos(a), -math.sin(t) * math.sin(a)])


def step_edge_pair(spec, direction, segments, margin_px=8.0, lo=40.0, hi=200.0):
    """Panorama with two anti-aliased step edges along 3D segments parallel to ``direction``.

    ``segments`` are ``(midpoint, half_length)`` pairs in the camera frame. Each
    edge is drawn only inside its own predicted region, with intensity ramping
    linearly across one pixel of angular distance from the edge's great circle.
    Returns the panorama and the two regions.
    """
    from palletpitch.edges import region_around_segments
    from palletpitch.geometry import unit
    from palletpitch.panorama import PanoramaImage, pano_pixel_to_ray

    pix = 2 * math.pi / spec.width
    d = unit(direction)
    img = np.full((spec.height, spec.width), lo)
    regions = []
    for p, half in segments:
        p = np.asarray(p, dtype=float)
        rg = region_around_segments([np.array([p - half * d, p + half * d])], spec, margin_px)
        regions.append(rg)
        v0, v1, u0, u1 = rg.v_min - 2, rg.v_max + 3, rg.u_min - 2, rg.u_max + 3
        vv, uu = np.mgrid[v0:v1, u0:u1].astype(float)
        rays = pano_pixel_to_ray(spec, uu, vv)
        n = unit(np.cross(p, d))
        s = (rays @ n) / pix
        e0, e1 = unit(p - half * d), unit(p + half * d)
        inside = (np.cross(e0, rays) @ n >= 0) & (np.cross(rays, e1) @ n >= 0)
        img[v0:v1, u0:u1] = np.where(inside, lo + (hi - lo) * np.clip(0.5 + s, 0, 1), lo)
    return PanoramaImage(spec, img, np.ones_like(img, dtype=bool)), regions


def random_line_pair(rng, max_tilt_deg=9.0):
    """Direction within ``max_tilt_deg`` of camera Z and two segments flanking the optical axis."""
    r = math.radians(rng.uniform(0.0, max_tilt_deg))
    az = rng.uniform(-math.pi, math.pi)
    d = np.array([math.tan(r) * math.cos(az), math.tan(r) * math.sin(az), 1.0])
    d /= np.linalg.norm(d)
    x = rng.uniform(1000, 1800)
    w = rng.uniform(500, 800)
    zc = rng.uniform(-300, 300)
    half = rng.uniform(300, 600)
    segs = [(np.array([x, w, zc]), half), (np.array([x + rng.uniform(-100, 100), -w, zc]), half)]
    return d, segs


# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE_LINES.append((criterion, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
