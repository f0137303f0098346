"""Pallet pitch from one wide-angle image.

Pipeline: locate the pallet front face by pose search, predict where the
cargo's vertical edges (loaded) and the pallet's top-surface side edges
(unloaded) should appear in two panoramas, recover each pair's common 3D
direction with the meridian Hough search, pick the hypothesis that holds
up, and express the result as a pitch angle in the fork frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .edges import (
    DEFAULT_EDGE_THRESHOLD,
    DEFAULT_RATIO_THRESHOLD,
    LineDetection,
    detect_edges,
    hough_direction,
    region_around_segments,
)
from .errors import CalibrationMissing, NotDetected, NoValidHypothesis
from .geometry import RigidTransform, axis_angle, rot_y, rot_z, unit
from .panorama import PanoramaSpec, build_panorama
from .pose_search import (
    DEFAULT_DETECT_THRESHOLD,
    DEFAULT_RANGES,
    DEFAULT_STEPS,
    PoseHypothesis,
    edge_distance_map,
    search_planar_pose,
)
from .specs import CargoBox, PalletSpec

LOADED = "loaded"
UNLOADED = "unloaded"

# panorama pole used for each hypothesis
HYPOTHESIS_AXIS = {LOADED: "z", UNLOADED: "x"}


@dataclass(frozen=True)
class PalletPose:
    """Pallet front-face centre and attitude in the fork frame."""

    x: float
    y: float
    z: float
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def to_dict(self) -> dict:
        return {"x_mm": self.x, "y_mm": self.y, "z_mm": self.z,
                "yaw_deg": self.yaw_deg, "pitch_deg": self.pitch_deg}

    @classmethod
    def from_dict(cls, d: dict) -> "PalletPose":
        return cls(float(d["x_mm"]), float(d["y_mm"]), float(d["z_mm"]),
                   float(d.get("yaw_deg", 0.0)), float(d.get("pitch_deg", 0.0)))


@dataclass(frozen=True, eq=False)
class PitchResult:
    loaded: bool
    pitch_deg: float
    pose_fork: PalletPose
    detections: dict
    hypothesis_report: dict
    similarity: float = 0.0
    forward_fork: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    @property
    def hypothesis(self) -> str:
        return LOADED if self.loaded else UNLOADED

    def to_dict(self) -> dict:
        return {
            "loaded": self.loaded,
            "pitch_deg": self.pitch_deg,
            "pose_fork": self.pose_fork.to_dict(),
            "score_ratios": {k: [float(r) for r in d.ratios] for k, d in self.detections.items()},
            "hypothesis": self.hypothesis,
            "valid": dict(self.hypothesis_report),
            "similarity": self.similarity,
        }


# ---------------------------------------------------------------------------
# region prediction


def hypothesis_edges(spec: PalletSpec, hypothesis: str):
    """Left (+Y) and right (-Y) 3D edge segments in the pallet frame."""
    H = spec.height / 2
    if hypothesis == LOADED:
        c = spec.cargo if spec.cargo is not None else CargoBox()
        w = c.width / 2
        return (np.array([[0.0, w, H], [0.0, w, H + c.height]]),
                np.array([[0.0, -w, H], [0.0, -w, H + c.height]]))
    if hypothesis == UNLOADED:
        W, D = spec.width / 2, spec.depth
        return (np.array([[0.0, W, H], [D, W, H]]),
                np.array([[0.0, -W, H], [D, -W, H]]))
    raise ValueError(f"unknown hypothesis {hypothesis!r}")


def _pallet_pose_tuple(pallet_pose):
    if isinstance(pallet_pose, PoseHypothesis):
        return pallet_pose.rotation, pallet_pose.position
    if isinstance(pallet_pose, RigidTransform):
        return pallet_pose.rotation, pallet_pose.translation
    R, t = pallet_pose
    return np.asarray(R, dtype=float), np.asarray(t, dtype=float)


def predict_edge_regions(pallet_pose, spec: PalletSpec, hypothesis: str, pano_spec: PanoramaSpec,
                         margin_px: float = 8.0, pitch_margin_deg: float = 6.0):
    """Panorama rectangles where the hypothesis' left and right edges should appear.

    ``pallet_pose`` maps pallet to camera coordinates (a
    :class:`PoseHypothesis`, a :class:`RigidTransform` or an ``(R, t)`` pair).
    Each rectangle bounds the projected edge for pallet pitches within
    ``+-pitch_margin_deg`` of the pose, dilated by ``margin_px``. The
    expected line height is the edge's vertical extent at the given pose.
    """
    R, t = _pallet_pose_tuple(pallet_pose)
    tilts = [0.0]
    if pitch_margin_deg > 0:
        tilts += [x for x in np.linspace(-pitch_margin_deg, pitch_margin_deg, 7) if x != 0.0]
    rots = [R @ rot_y(-math.radians(tilt)) for tilt in tilts]
    left, right = (region_around_segments([seg @ Rt.T + t for Rt in rots], pano_spec, margin_px)
                   for seg in hypothesis_edges(spec, hypothesis))
    return left, right


# ---------------------------------------------------------------------------
# arbitration and pitch


def arbitrate(loaded_det: LineDetection, unloaded_det: LineDetection) -> str:
    """Pick the hypothesis to adopt; the unloaded reading wins when both hold."""
    if unloaded_det.valid:
        return UNLOADED
    if loaded_det.valid:
        return LOADED
    raise NoValidHypothesis("neither the loaded nor the unloaded edges were found")


def lateral_axis(yaw_deg: float) -> np.ndarray:
    psi = math.radians(yaw_deg)
    return np.array([-math.sin(psi), math.cos(psi), 0.0])


def forward_from_vertical(v_fork, yaw_deg: float) -> np.ndarray:
    """Pallet forward axis from the cargo vertical: +90 degrees about the lateral axis."""
    v = unit(v_fork)
    if v[2] < 0:
        v = -v
    return axis_angle(lateral_axis(yaw_deg), math.pi / 2) @ v


def pitch_from_forward(f) -> float:
    f = np.asarray(f, dtype=float)
    if f[0] < 0:
        f = -f
    return math.degrees(math.atan2(f[2], math.hypot(f[0], f[1])))


def pitch_from_direction(direction_fork, hypothesis: str, yaw_deg: float = 0.0) -> float:
    """Pitch (deg, front up positive) from an adopted direction in the fork frame."""
    if hypothesis == LOADED:
        return pitch_from_forward(forward_from_vertical(direction_fork, yaw_deg))
    return pitch_from_forward(direction_fork)


def _detect(image, camera, pose: PoseHypothesis, spec: PalletSpec, hypothesis: str,
            pano_width: int, margin_px: float, pitch_margin_deg: float, edge_threshold: float,
            ratio_threshold: float, search_half_angle: float):
    pano_spec = PanoramaSpec.about(HYPOTHESIS_AXIS[hypothesis], pano_width, pano_width // 2)
    pano = build_panorama(image, camera, pano_spec)
    left, right = predict_edge_regions(pose, spec, hypothesis, pano_spec, margin_px, pitch_margin_deg)
    el = detect_edges(pano, left, edge_threshold)
    er = detect_edges(pano, right, edge_threshold)
    return hough_direction(el, er, pano_spec.pole, search_half_angle,
                           ratio_threshold=ratio_threshold)


def measure_pitch(image, camera, calib: RigidTransform | None, spec: PalletSpec, prior: PalletPose,
                  use_shift: bool = False, ranges=DEFAULT_RANGES, steps=DEFAULT_STEPS,
                  detect_threshold: float = DEFAULT_DETECT_THRESHOLD,
                  edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
                  ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
                  margin_px: float = 8.0, pitch_margin_deg: float = 6.0,
                  search_half_angle: float = 10.0, pano_width: int = 2048,
                  refine_position: bool = True, force: str | None = None) -> PitchResult:
    """Measure the pallet pitch relative to the forks.

    ``calib`` maps camera to fork coordinates and ``prior`` is a rough
    pallet pose in the fork frame (pitch ignored). ``force`` adopts the
    named hypothesis regardless of arbitration (for diagnostics).
    With ``refine_position`` the front-face position is searched once more
    with the measured pitch applied to the model.
    """
    if calib is None:
        raise CalibrationMissing("a camera-to-fork calibration is required")
    if (calib.from_frame, calib.to_frame) != ("camera", "fork"):
        raise CalibrationMissing("calibration must map camera to fork coordinates")
    to_cam = calib.inverse()
    prior_cam = PoseHypothesis(to_cam.apply_points(prior.position), prior.yaw_deg, 0.0,
                               to_cam.rotation)
    model = spec.face_model()
    try:
        dist = edge_distance_map(image, edge_threshold)
        pose = search_planar_pose(image, model, camera, prior_cam, ranges, steps, use_shift,
                                  detect_threshold, edge_threshold, dist=dist)
    except NotDetected as exc:
        raise NotDetected(f"pallet not detected ({exc})") from exc

    detections = {}
    for hyp in (LOADED, UNLOADED):
        detections[hyp] = _detect(image, camera, pose, spec, hyp, pano_width, margin_px,
                                  pitch_margin_deg, edge_threshold, ratio_threshold,
                                  search_half_angle)
    report = {k: bool(d.valid) for k, d in detections.items()}
    adopted = force if force is not None else arbitrate(detections[LOADED], detections[UNLOADED])

    yaw = pose.yaw_deg
    d_fork = calib.apply_directions(detections[adopted].direction)
    if adopted == LOADED:
        forward = forward_from_vertical(d_fork, yaw)
    else:
        forward = unit(d_fork if d_fork[0] >= 0 else -d_fork)
    pitch = pitch_from_forward(forward)

    if refine_position:
        # same attitude convention as the search, now with the measured pitch
        base = to_cam.rotation @ rot_z(math.radians(yaw)) @ rot_y(-math.radians(pitch))
        refined = PoseHypothesis(pose.position, 0.0, 0.0, base)
        pose2 = search_planar_pose(image, model, camera, refined,
                                   (steps[0], steps[1], steps[2], 0.0),
                                   (steps[0] / 4, steps[1] / 4, steps[2] / 4, 0.0), use_shift, 0.0,
                                   edge_threshold, refinements=1, dist=dist)
        if pose2.similarity >= pose.similarity:
            pose = pose.moved(position=pose2.position, similarity=pose2.similarity)

    p_fork = calib.apply_points(pose.position)
    pose_fork = PalletPose(float(p_fork[0]), float(p_fork[1]), float(p_fork[2]), float(yaw), pitch)
    return PitchResult(adopted == LOADED, pitch, pose_fork, detections, report,
                       pose.similarity, forward)
