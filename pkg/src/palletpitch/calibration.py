"""Camera-to-fork calibration from one image of a panel lying on the forks.

The panel is first located by pose search with a level attitude. Its
lateral edges (parallel to the fork X axis) and its front and rear edges
(parallel to fork Y) then give two directions via the meridian Hough search
on panoramas about the camera X and Y axes; together they fix the panel
orientation. The position is searched again with that orientation frozen,
and the known panel-to-fork offset turns the panel pose into the
camera-to-fork transform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .edges import (
    DEFAULT_EDGE_THRESHOLD,
    DEFAULT_RATIO_THRESHOLD,
    detect_edges,
    hough_direction,
    region_around_segments,
)
from .errors import NotDetected, NoValidHypothesis
from .geometry import (
    CameraModel,
    RigidTransform,
    incidence_angle,
    rot_x,
    rot_y,
    rotation_from_axes,
    unit,
)
from .panorama import PanoramaSpec, build_panorama
from .pose_search import (
    DEFAULT_DETECT_THRESHOLD,
    DEFAULT_RANGES,
    DEFAULT_STEPS,
    PoseHypothesis,
    edge_distance_map,
    search_planar_pose,
)
from .specs import PanelSpec

# nominal panel top-face centre in the camera frame for the scenario mount
NOMINAL_PANEL_POSITION = (705.0, 0.0, -1055.0)

POSITION_RANGES = (40.0, 40.0, 40.0, 0.0)
POSITION_STEPS = (5.0, 5.0, 5.0, 0.0)


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    camera_to_fork: RigidTransform
    panel_pose: RigidTransform
    residual: float
    shift_compensated: bool
    coarse: PoseHypothesis | None = None
    detections: tuple = ()

    def to_dict(self) -> dict:
        d = self.camera_to_fork.to_dict()
        d["shift_compensated"] = bool(self.shift_compensated)
        d["residual"] = float(self.residual)
        d["panel_pose_camera"] = {"position_mm": self.panel_pose.translation.tolist(),
                                  "rotation": self.panel_pose.rotation.tolist()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        T = RigidTransform.from_dict(d)
        if "panel_pose_camera" in d:
            p = d["panel_pose_camera"]
            panel = RigidTransform(np.asarray(p["rotation"]), np.asarray(p["position_mm"]),
                                   "panel", "camera")
        else:
            panel = RigidTransform(np.eye(3), np.zeros(3), "panel", "camera")
        return cls(T, panel, float(d.get("residual", 0.0)), bool(d.get("shift_compensated", False)))


def panel_edges(panel: PanelSpec) -> dict:
    """Top-face outline segments in the panel frame, grouped by direction."""
    h, w = panel.height / 2, panel.width / 2
    return {
        "x": (np.array([[-h, w, 0.0], [h, w, 0.0]]), np.array([[-h, -w, 0.0], [h, -w, 0.0]])),
        "y": (np.array([[h, -w, 0.0], [h, w, 0.0]]), np.array([[-h, -w, 0.0], [-h, w, 0.0]])),
    }


def _tilted(R: np.ndarray, margin_deg: float):
    out = [R]
    if margin_deg > 0:
        m = math.radians(margin_deg)
        for k in (-1, 1):
            out += [R @ rot_x(k * m), R @ rot_y(k * m)]
    return out


def estimate_panel_orientation(image, camera: CameraModel, coarse_pose: PoseHypothesis,
                               panel: PanelSpec = PanelSpec(), margin_px: float = 8.0,
                               tilt_margin_deg: float = 4.0, pano_width: int = 2048,
                               edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
                               ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
                               search_half_angle: float = 10.0, return_detections: bool = False):
    """Panel rotation (panel to camera) from its two families of parallel edges.

    The lateral edges give the panel X axis on a panorama about camera X;
    the front and rear edges give its Y axis on a panorama about camera Y.
    Raises :class:`NoValidHypothesis` if either pair fails the score test.
    """
    rots = _tilted(coarse_pose.rotation, tilt_margin_deg)
    t = coarse_pose.position
    dirs = {}
    dets = []
    for axis, segs in panel_edges(panel).items():
        spec = PanoramaSpec.about(axis, pano_width, pano_width // 2)
        pano = build_panorama(image, camera, spec)
        regions = [region_around_segments([s @ R.T + t for R in rots], spec, margin_px) for s in segs]
        em = [detect_edges(pano, r, edge_threshold) for r in regions]
        det = hough_direction(em[0], em[1], spec.pole, search_half_angle,
                              ratio_threshold=ratio_threshold)
        if not det.valid:
            raise NoValidHypothesis(f"panel edges along {axis} not found "
                                    f"(ratios {det.ratios[0]:.2f}, {det.ratios[1]:.2f})")
        d = det.direction
        dirs[axis] = d if np.dot(d, spec.pole) >= 0 else -d
        dets.append(det)
    R = rotation_from_axes(dirs["x"], dirs["y"], ("x", "y"))
    if return_detections:
        return R, tuple(dets)
    return R


def calibrate_camera_to_fork(image, camera: CameraModel, panel: PanelSpec = PanelSpec(),
                             use_shift: bool = True, prior: PoseHypothesis | None = None,
                             ranges=DEFAULT_RANGES, steps=DEFAULT_STEPS,
                             position_ranges=POSITION_RANGES, position_steps=POSITION_STEPS,
                             detect_threshold: float = DEFAULT_DETECT_THRESHOLD,
                             edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
                             ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
                             pano_width: int = 2048) -> CalibrationResult:
    """Camera-to-fork transform from one panel image.

    ``prior`` is a rough panel pose in the camera frame; the default is the
    nominal scenario mount (level camera, panel centre at
    ``NOMINAL_PANEL_POSITION``). ``use_shift`` makes both pose searches
    project through the viewpoint-shift model.
    """
    use_shift = use_shift and camera.shift_curve is not None
    if prior is None:
        prior = PoseHypothesis(np.array(NOMINAL_PANEL_POSITION), 0.0, 0.0, np.eye(3))
    model = panel.model()
    try:
        dist = edge_distance_map(image, edge_threshold)
        coarse = search_planar_pose(image, model, camera, prior, ranges, steps, use_shift,
                                    detect_threshold, edge_threshold, dist=dist)
    except NotDetected as exc:
        raise NotDetected(f"panel not detected ({exc})") from exc
    R, dets = estimate_panel_orientation(image, camera, coarse, panel, pano_width=pano_width,
                                         edge_threshold=edge_threshold,
                                         ratio_threshold=ratio_threshold, return_detections=True)
    frozen = PoseHypothesis(coarse.position, 0.0, 0.0, R)
    final = search_planar_pose(image, model, camera, frozen, position_ranges, position_steps,
                               use_shift, detect_threshold, edge_threshold, dist=dist)
    panel_to_cam = RigidTransform(R, final.position, "panel", "camera")
    fork_to_panel = RigidTransform(np.eye(3), np.asarray(panel.offset), "fork", "panel")
    fork_to_cam = panel_to_cam.compose(fork_to_panel)
    return CalibrationResult(fork_to_cam.inverse(), panel_to_cam, final.similarity, use_shift,
                             coarse, dets)


def shift_error_prediction(camera: CameraModel, panel: PanelSpec = PanelSpec(),
                           panel_position=NOMINAL_PANEL_POSITION) -> float:
    """Upward height bias (mm) of a level panel located while ignoring viewpoint shift.

    Rays to the rear (near) edge really start ``s_rear`` ahead of the
    reference viewpoint, those to the front edge ``s_front`` ahead. Fitting a
    panel of known depth ``L`` to the uncorrected rays shrinks its depth
    below the camera ``h`` by ``h (s_rear - s_front) / L`` to first order.
    """
    if camera.shift_curve is None:
        return 0.0
    x, y, z = (float(v) for v in panel_position)
    h = -z
    L = panel.height
    rear = np.array([x - L / 2, y, z])
    front = np.array([x + L / 2, y, z])
    s_rear = float(camera.shift_curve.offset(incidence_angle(unit(rear))))
    s_front = float(camera.shift_curve.offset(incidence_angle(unit(front))))
    return h * (s_rear - s_front) / L
