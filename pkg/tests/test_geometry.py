import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ray_at
from palletpitch.errors import (
    DegenerateAxes,
    FrameMismatch,
    NonInvertibleModel,
    OutOfFieldOfView,
    OutOfImage,
)
from palletpitch.geometry import (
    CameraModel,
    Direction,
    Point,
    Pose,
    RigidTransform,
    ViewpointShiftCurve,
    angle_between,
    axis_angle,
    pitch_yaw_rotation,
    pixel_to_ray,
    project_points,
    project_ray_to_pixel,
    rotation_from_axes,
    transform_pose,
    unit,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)
vec = st.tuples(*[st.floats(-1e3, 1e3, allow_nan=False)] * 3)


def test_optical_axis_maps_to_principal_point(equidistant):
    assert project_ray_to_pixel(equidistant, [1.0, 0.0, 0.0]) == pytest.approx((960.0, 960.0))


@pytest.mark.parametrize("azimuth, expected", [(0.0, (960 + 392.699, 960.0)),
                                               (90.0, (960.0, 960 + 392.699))])
def test_forty_five_degree_rays(equidistant, azimuth, expected):
    # rho = 500 * pi / 4
    u, v = project_ray_to_pixel(equidistant, ray_at(45.0, azimuth))
    assert u == pytest.approx(expected[0], abs=1e-3)
    assert v == pytest.approx(expected[1], abs=1e-3)


def test_polynomial_and_affine_applied_in_order():
    cam = CameraModel(800, 600, 400.0, 300.0, (0.0, 300.0, 0.0, -10.0), affine=(1.01, 0.02, -0.03))
    ray = ray_at(30.0, 20.0)
    th = math.radians(30.0)
    rho = 300 * th - 10 * th ** 3
    mx, my = rho * math.cos(math.radians(20.0)), rho * math.sin(math.radians(20.0))
    u, v = project_ray_to_pixel(cam, ray)
    assert u == pytest.approx(1.01 * mx + 0.02 * my + 400.0, abs=1e-9)
    assert v == pytest.approx(-0.03 * mx + my + 300.0, abs=1e-9)


def test_beyond_field_raises(equidistant):
    with pytest.raises(OutOfFieldOfView):
        project_ray_to_pixel(equidistant, ray_at(96.0, 0.0))


def test_principal_point_unprojects_to_axis(equidistant):
    origin, d = pixel_to_ray(equidistant, (960.0, 960.0), use_shift=True)
    assert np.allclose(origin, 0.0)
    assert np.allclose(d, [1.0, 0.0, 0.0])


def test_shift_offset_at_eighty_degrees(equidistant):
    u, v = project_ray_to_pixel(equidistant, ray_at(80.0, 30.0))
    origin, d = pixel_to_ray(equidistant, (u, v), use_shift=True)
    assert origin == pytest.approx([10.0, 0.0, 0.0], abs=1e-6)
    origin, _ = pixel_to_ray(equidistant, (u, v), use_shift=False)
    assert np.allclose(origin, 0.0)


def test_pixel_outside_image(equidistant):
    with pytest.raises(OutOfImage):
        pixel_to_ray(equidistant, (-5.0, 10.0))


def test_non_monotone_polynomial_rejected():
    cam = CameraModel(100, 100, 50.0, 50.0, (0.0, 100.0, -200.0), theta_max_deg=90.0)
    assert not cam.is_invertible
    with pytest.raises(NonInvertibleModel):
        pixel_to_ray(cam, (60.0, 50.0))


def test_projection_round_trip_1000(camera):
    rng = np.random.default_rng(11)
    th = rng.uniform(0.0, camera.theta_max, 1000)
    ph = rng.uniform(-math.pi, math.pi, 1000)
    rays = np.stack([np.cos(th), np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph)], -1)
    u, v = project_ray_to_pixel(camera, rays)
    inside = camera.in_image(u, v)
    assert inside.sum() > 900
    _, back = pixel_to_ray(camera, np.stack([u[inside], v[inside]], -1))
    err = np.arccos(np.clip(np.sum(back * rays[inside], axis=1), -1, 1))
    assert err.max() < 1e-6


def test_shifted_projection_reprojects_through_offset(equidistant):
    # a point seen through the displaced viewpoint lands on the pixel whose shifted ray hits it
    p = 1000.0 * ray_at(70.0, 40.0)
    u, v = project_points(equidistant, p, use_shift=True)
    origin, d = pixel_to_ray(equidistant, (u, v), use_shift=True)
    miss = np.linalg.norm(np.cross(p - origin, d))
    assert miss < 0.5  # the correction is applied once, not iterated to convergence


class TestShiftCurve:
    def test_zero_at_reference(self):
        c = ViewpointShiftCurve((45.0, 80.0), (0.0, 10.0))
        assert c.offset_deg(45.0) == 0.0

    @pytest.mark.parametrize("deg, mm", [(10.0, 0.0), (62.5, 5.0), (80.0, 10.0), (95.0, 10.0)])
    def test_linear_and_clamped(self, deg, mm):
        c = ViewpointShiftCurve((45.0, 80.0), (0.0, 10.0))
        assert c.offset_deg(deg) == pytest.approx(mm)

    @pytest.mark.parametrize("angles, offsets", [((45.0, 40.0), (0.0, 1.0)),
                                                 ((30.0, 80.0), (1.0, 2.0)),
                                                 ((45.0, 80.0), (0.0, math.inf))])
    def test_invalid_curves(self, angles, offsets):
        with pytest.raises(ValueError):
            ViewpointShiftCurve(angles, offsets)


class TestRotationFromAxes:
    def test_identity_axes(self):
        R = rotation_from_axes((0, 0, 1), (1, 0, 0), ("z", "x"))
        assert np.allclose(R, np.eye(3))

    def test_secondary_reorthogonalised(self):
        s = unit([math.cos(math.radians(1.0)), 0.0, math.sin(math.radians(1.0))])
        R = rotation_from_axes((0, 0, 1), s, ("z", "x"))
        assert np.allclose(R[:, 2], [0, 0, 1])
        assert np.allclose(R[:, 0], [1, 0, 0], atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_parallel_raises(self):
        with pytest.raises(DegenerateAxes):
            rotation_from_axes((0, 0, 1), (0, 0, 1))

    @settings(max_examples=200, deadline=None)
    @given(vec, vec)
    def test_always_proper(self, p, s):
        p, s = np.array(p), np.array(s)
        if np.linalg.norm(p) < 1e-3 or np.linalg.norm(s) < 1e-3:
            return
        try:
            R = rotation_from_axes(p, s)
        except DegenerateAxes:
            assert min(angle_between(p, s), angle_between(p, -s)) < math.radians(1.0) + 1e-9
            return
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(R[:, 0], unit(p))


class TestTransforms:
    def test_identity(self):
        T = RigidTransform(np.eye(3), np.zeros(3), "camera", "fork")
        p = Point(np.array([1.0, 2.0, 3.0]), "camera")
        assert np.allclose(transform_pose(T, p).xyz, p.xyz)

    def test_translation_ignores_directions(self):
        T = RigidTransform(np.eye(3), [0.0, 0.0, 100.0], "camera", "fork")
        assert np.allclose(transform_pose(T, Point(np.zeros(3), "camera")).xyz, [0, 0, 100])
        d = transform_pose(T, Direction(np.array([1.0, 0.0, 0.0]), "camera"))
        assert np.allclose(d.xyz, [1, 0, 0]) and d.frame == "fork"

    def test_pose_rotation_composes(self):
        R = axis_angle([0, 0, 1], 0.3)
        T = RigidTransform(R, [1.0, 2.0, 3.0], "pallet", "camera")
        out = transform_pose(T, Pose(np.zeros(3), np.eye(3), "pallet"))
        assert np.allclose(out.rotation, R) and out.frame == "camera"

    def test_frame_mismatch(self):
        T = RigidTransform(np.eye(3), np.zeros(3), "camera", "fork")
        with pytest.raises(FrameMismatch):
            transform_pose(T, Point(np.zeros(3), "pallet"))
        with pytest.raises(FrameMismatch):
            T.compose(T)

    def test_rejects_improper_rotation(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    @settings(max_examples=100, deadline=None)
    @given(vec, angles, vec)
    def test_compose_with_inverse_is_identity(self, axis, angle, t):
        if np.linalg.norm(axis) < 1e-3:
            return
        T = RigidTransform(axis_angle(axis, angle), t, "camera", "fork")
        I = T.compose(T.inverse())
        assert np.allclose(I.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(I.translation, 0.0, atol=1e-6)
        pts = np.random.default_rng(0).uniform(-1e3, 1e3, (20, 3))
        assert np.allclose(T.inverse().apply_points(T.apply_points(pts)), pts, atol=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(vec, angles, vec)
    def test_directions_keep_norm(self, axis, angle, d):
        if np.linalg.norm(axis) < 1e-3:
            return
        T = RigidTransform(axis_angle(axis, angle), [5.0, 6.0, 7.0])
        assert np.linalg.norm(T.apply_directions(d)) == pytest.approx(np.linalg.norm(d), rel=1e-12, abs=1e-12)

    def test_dict_round_trip(self):
        T = RigidTransform(pitch_yaw_rotation(3.0, -2.0), [1.0, -2.0, 3.0], "camera", "fork")
        U = RigidTransform.from_dict(T.to_dict())
        assert np.allclose(U.rotation, T.rotation) and np.allclose(U.translation, T.translation)


@pytest.mark.parametrize("yaw, pitch", [(0.0, 4.19), (5.0, -0.99), (-3.0, 1.65)])
def test_pitch_yaw_rotation_front_up_positive(yaw, pitch):
    f = pitch_yaw_rotation(yaw, pitch)[:, 0]
    assert math.degrees(math.atan2(f[2], math.hypot(f[0], f[1]))) == pytest.approx(pitch)


def test_camera_dict_round_trip(equidistant):
    cam = CameraModel.from_dict(equidistant.to_dict())
    assert cam.to_dict() == equidistant.to_dict()
