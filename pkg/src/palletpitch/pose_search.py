"""Planar model pose search by one-sided chamfer matching in the fisheye image.

A known rectangle (pallet front face with its slots, or the calibration
panel) is projected through the camera for each hypothesis on a local
(X, Y, Z, yaw) grid, and compared against the image edge map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .edges import DEFAULT_EDGE_THRESHOLD, sobel_gradients
from ._kernels import camera_arrays, score_kernel
from .errors import NotDetected, OutOfFieldOfView
from .geometry import CameraModel, RigidTransform, project_points, rot_z

DEFAULT_DETECT_THRESHOLD = 0.6
DEFAULT_RANGES = (150.0, 150.0, 150.0, 5.0)
DEFAULT_STEPS = (10.0, 10.0, 10.0, 1.0)
_KERNEL_WEIGHT = 0.25


@dataclass(frozen=True)
class Hole:
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class PlanarModel:
    """Rectangle of ``width`` x ``height`` mm centred on the object origin.

    Model coordinates (s, t) map to the object frame according to ``plane``:
    ``"yz"`` puts the rectangle upright facing -X (pallet front face) with
    s -> Y, t -> Z; ``"xy"`` lays it flat (panel) with s -> Y, t -> X.
    """

    width: float
    height: float
    holes: tuple = ()
    plane: str = "yz"

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("model dimensions must be positive")
        if self.plane not in ("yz", "xy"):
            raise ValueError("plane must be 'yz' or 'xy'")
        holes = tuple(h if isinstance(h, Hole) else Hole(*h) for h in self.holes)
        for h in holes:
            if (abs(h.cx) + h.w / 2 > self.width / 2 + 1e-9
                    or abs(h.cy) + h.h / 2 > self.height / 2 + 1e-9):
                raise ValueError("hole outline extends past the face outline")
        object.__setattr__(self, "holes", holes)

    def to_object(self, s, t) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        z = np.zeros_like(s)
        if self.plane == "yz":
            return np.stack([z, s, t], axis=-1)
        return np.stack([t, s, z], axis=-1)

    def segments(self) -> np.ndarray:
        """Outline segments as an ``(n, 2, 3)`` array in the object frame."""
        rects = [(0.0, 0.0, self.width, self.height)] + [(h.cx, h.cy, h.w, h.h) for h in self.holes]
        segs = []
        for cx, cy, w, h in rects:
            x0, x1, y0, y1 = cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2
            corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
            for (s0, t0), (s1, t1) in zip(corners, corners[1:] + corners[:1]):
                segs.append([self.to_object(s0, t0), self.to_object(s1, t1)])
        return np.asarray(segs)

    def to_dict(self) -> dict:
        return {"width_mm": self.width, "height_mm": self.height, "plane": self.plane,
                "holes": [{"cx": h.cx, "cy": h.cy, "w": h.w, "h": h.h} for h in self.holes]}

    @classmethod
    def from_dict(cls, d: dict) -> "PlanarModel":
        holes = tuple(Hole(h["cx"], h["cy"], h["w"], h["h"]) for h in d.get("holes", []))
        return cls(float(d["width_mm"]), float(d["height_mm"]), holes, d.get("plane", "yz"))


@dataclass(frozen=True, eq=False)
class PoseHypothesis:
    """Object pose in the camera frame.

    The object's attitude is ``base_rotation @ rot_z(yaw)``: yaw turns the
    object about its own up axis; pitch and roll come only from
    ``base_rotation``.
    """

    position: np.ndarray
    yaw_deg: float = 0.0
    similarity: float = 0.0
    base_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "base_rotation", np.asarray(self.base_rotation, dtype=float))
        if not np.all(np.isfinite(self.position)) or not math.isfinite(self.similarity):
            raise ValueError("pose hypothesis must be finite")

    @property
    def rotation(self) -> np.ndarray:
        return self.base_rotation @ rot_z(math.radians(self.yaw_deg))

    def object_to_camera(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.rotation.T + self.position

    def to_transform(self, from_frame: str = "pallet") -> RigidTransform:
        return RigidTransform(self.rotation, self.position, from_frame, "camera")

    def moved(self, position=None, yaw_deg=None, similarity=None, base_rotation=None) -> "PoseHypothesis":
        return PoseHypothesis(
            self.position if position is None else position,
            self.yaw_deg if yaw_deg is None else yaw_deg,
            self.similarity if similarity is None else similarity,
            self.base_rotation if base_rotation is None else base_rotation,
        )


def model_samples(model: PlanarModel, pose: PoseHypothesis, camera: CameraModel,
                  spacing_px: float = 0.5) -> np.ndarray:
    """Object-frame points along the outline, about ``spacing_px`` apart in the image at ``pose``."""
    out = []
    probe = np.linspace(0.0, 1.0, 17)
    for p0, p1 in model.segments():
        pts = p0 + probe[:, None] * (p1 - p0)
        u, v = project_points(camera, pose.object_to_camera(pts))
        steps = np.hypot(np.diff(u), np.diff(v))
        length = float(np.nansum(steps)) if np.any(np.isfinite(steps)) else 0.0
        n = max(2, int(math.ceil(length / spacing_px)) + 1)
        t = np.linspace(0.0, 1.0, n)
        out.append(p0 + t[:, None] * (p1 - p0))
    return np.concatenate(out)


def render_model_projection(model: PlanarModel, pose: PoseHypothesis, camera: CameraModel,
                            use_shift: bool = False) -> np.ndarray:
    """Binary 1-px-wide template of the model outline at ``pose``."""
    pts = pose.object_to_camera(model_samples(model, pose, camera, 0.5))
    u, v = project_points(camera, pts, use_shift=use_shift)
    ok = np.isfinite(u) & np.isfinite(v)
    ui = np.rint(u[ok]).astype(int)
    vi = np.rint(v[ok]).astype(int)
    inside = (ui >= 0) & (ui < camera.width) & (vi >= 0) & (vi < camera.height)
    if pose.position[0] <= 0 or not np.any(inside):
        raise OutOfFieldOfView("model does not project into the image")
    img = np.zeros((camera.height, camera.width), dtype=bool)
    img[vi[inside], ui[inside]] = True
    return img


def thin_edges(image, edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> np.ndarray:
    """Thresholded Sobel edges reduced to one pixel by non-maximum suppression."""
    mag, ori = sobel_gradients(image)
    q = (np.round(ori / (np.pi / 4)).astype(int)) % 4
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    keep = np.zeros(mag.shape, dtype=bool)
    padded = np.pad(mag, 1, mode="constant")
    H, W = mag.shape
    for k, (dv, du) in offsets.items():
        fwd = padded[1 + dv:1 + dv + H, 1 + du:1 + du + W]
        bwd = padded[1 - dv:1 - dv + H, 1 - du:1 - du + W]
        keep |= (q == k) & (mag >= fwd) & (mag > bwd)
    return keep & (mag >= edge_threshold)


def edge_distance_map(image, edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> np.ndarray:
    """Distance (px) to the nearest edge pixel.

    A boolean ``image`` is taken as an edge mask as is (e.g. a template from
    :func:`render_model_projection`); anything else goes through :func:`thin_edges`.
    """
    image = np.asarray(image)
    edges = image if image.dtype == bool else thin_edges(image, edge_threshold)
    if not edges.any():
        raise NotDetected("no edges in image")
    return ndimage.distance_transform_edt(~edges)


def _lookup(dist: np.ndarray, u: np.ndarray, v: np.ndarray, bilinear: bool) -> np.ndarray:
    H, W = dist.shape
    far = np.float32(1e3)
    ok = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (v >= 0) & (u <= W - 1) & (v <= H - 1)
    u = np.where(ok, u, 0.0)
    v = np.where(ok, v, 0.0)
    if not bilinear:
        d = dist[np.rint(v).astype(np.intp), np.rint(u).astype(np.intp)]
        return np.where(ok, d, far)
    u0 = np.minimum(np.floor(u).astype(np.intp), W - 2)
    v0 = np.minimum(np.floor(v).astype(np.intp), H - 2)
    fu = u - u0
    fv = v - v0
    d = ((1 - fv) * ((1 - fu) * dist[v0, u0] + fu * dist[v0, u0 + 1])
         + fv * ((1 - fu) * dist[v0 + 1, u0] + fu * dist[v0 + 1, u0 + 1]))
    return np.where(ok, d, far)


def score_poses(dist: np.ndarray, camera: CameraModel, obj_pts: np.ndarray, rotation: np.ndarray,
                positions: np.ndarray, use_shift: bool, tolerance_px: float = 2.0,
                bilinear: bool = True, compiled: bool = True, chunk_points: int = 2_000_000):
    """Ranking score and similarity for translated copies of one attitude.

    The similarity is the fraction of template samples within
    ``tolerance_px`` of an image edge. The ranking score adds a small
    linear-distance-kernel term to it, which picks the centre of the flat
    plateau the fraction alone leaves around the optimum. ``compiled``
    selects the fused loop; the array version is kept as its reference.
    """
    pts = obj_pts @ rotation.T
    reach = tolerance_px + 1.0
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if compiled:
        cx, cy, poly, affine, theta_max, sd, sm = camera_arrays(camera)
        if not use_shift:
            sd, sm = sd[:0], sm[:0]
        return score_kernel(np.ascontiguousarray(dist, dtype=np.float64), np.ascontiguousarray(pts),
                            np.ascontiguousarray(positions), cx, cy, poly, affine, theta_max,
                            sd, sm, float(tolerance_px), reach, _KERNEL_WEIGHT, bool(bilinear))
    n = len(pts)
    per = max(1, chunk_points // n)
    rank = np.empty(len(positions))
    frac = np.empty(len(positions))
    for s in range(0, len(positions), per):
        P = pts[None, :, :] + positions[s:s + per, None, :]
        u, v = project_points(camera, P, use_shift=use_shift)
        d = _lookup(dist, u, v, bilinear)
        f = (d <= tolerance_px).mean(axis=1)
        rank[s:s + per] = f + _KERNEL_WEIGHT * np.clip(1.0 - d / reach, 0.0, 1.0).mean(axis=1)
        frac[s:s + per] = f
    return rank, frac


def _axis_values(half_range: float, step: float) -> np.ndarray:
    if half_range <= 0 or step <= 0:
        return np.zeros(1)
    n = int(math.floor(half_range / step + 1e-9))
    return np.arange(-n, n + 1) * step


def _grid_scores(dist, camera, samples, base, center, yaw_center, half, step, bounds, use_shift,
                 tolerance_px, bilinear):
    lo, hi = bounds
    axes = [center[i] + _axis_values(half[i], step[i]) for i in range(3)]
    axes = [ax[(ax >= lo[i] - 1e-9) & (ax <= hi[i] + 1e-9)] for i, ax in enumerate(axes)]
    yaws = yaw_center + _axis_values(half[3], step[3])
    yaws = yaws[(yaws >= lo[3] - 1e-9) & (yaws <= hi[3] + 1e-9)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    scores = np.empty((len(grid), len(yaws)))
    for j, yaw in enumerate(yaws):
        R = base @ rot_z(math.radians(yaw))
        scores[:, j], _ = score_poses(dist, camera, samples, R, grid, use_shift, tolerance_px,
                                      bilinear=bilinear)
    return grid, yaws, scores


def _descend(dist, camera, coarse, fine, base, center, yaw_center, half, step, bounds,
             refinements, use_shift, tolerance_px):
    """Grid pass at ``step`` followed by ``refinements`` halvings; returns (pos, yaw, rank)."""
    half = list(half)
    step = list(step)
    best = None
    for stage in range(refinements + 1):
        grid, yaws, scores = _grid_scores(dist, camera, coarse if stage == 0 else fine, base,
                                          center, yaw_center, half, step, bounds, use_shift,
                                          tolerance_px, bilinear=stage > 0)
        gi, yj = np.unravel_index(int(np.argmax(scores)), scores.shape)
        center, yaw_center = grid[gi], float(yaws[yj])
        best = (center, yaw_center, float(scores[gi, yj]))
        half = step
        step = [x / 2.0 for x in step]
    return best


def _prescan_seeds(scores, grid, yaws, step, k):
    """Up to ``k`` best cells, skipping any within one cell of a better seed."""
    order = np.argsort(-scores, axis=None, kind="stable")
    seeds = []
    for flat in order:
        gi, yj = np.unravel_index(int(flat), scores.shape)
        p, y = grid[gi], float(yaws[yj])
        close = any(np.all(np.abs(p - q) <= np.asarray(step[:3]) + 1e-9)
                    and abs(y - z) <= step[3] + 1e-9 for q, z in seeds)
        if not close:
            seeds.append((p, y))
        if len(seeds) >= k:
            break
    return seeds


def _polish_range(dist, camera, samples, R, pos, step, refinements, use_shift, tolerance_px,
                  n: int = 8):
    final = min(step[:3]) / 2.0 ** refinements
    if final <= 0:
        return pos
    ray = pos / np.linalg.norm(pos)
    # offsets ordered by magnitude so equal ranks keep the grid answer
    offsets = np.linspace(-1.5 * final, 1.5 * final, 2 * n + 1)
    offsets = offsets[np.argsort(np.abs(offsets), kind="stable")]
    rank, _ = score_poses(dist, camera, samples, R, pos + offsets[:, None] * ray, use_shift,
                          tolerance_px)
    return pos + offsets[int(np.argmax(rank))] * ray


def search_planar_pose(image, model: PlanarModel, camera: CameraModel, prior: PoseHypothesis,
                       ranges=DEFAULT_RANGES, steps=DEFAULT_STEPS, use_shift: bool = False,
                       detect_threshold: float = DEFAULT_DETECT_THRESHOLD,
                       edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
                       refinements: int = 2, tolerance_px: float = 2.0,
                       coarse_spacing_px: float = 3.0, dist: np.ndarray | None = None,
                       prescan: int | None = 6, prescan_min_poses: int = 20_000,
                       polish: bool = True) -> PoseHypothesis:
    """Grid search for the model pose best matching the image edges.

    The first pass covers ``prior +- ranges`` at ``steps`` (X, Y, Z in mm,
    yaw in degrees); each refinement halves the steps and searches one old
    step around the current best. A zero yaw range freezes the attitude.
    Ties resolve to the lexicographically smallest (X, Y, Z, yaw).

    When the first pass would exceed ``prescan_min_poses`` hypotheses and
    ``prescan`` is set, a grid of twice the step with a doubled distance
    tolerance picks that many seeds first, and the first pass only covers
    one prescan cell around each seed.

    ``polish`` finishes with a 1-D search along the line of sight through
    the best position. Range is the worst-conditioned direction: the score
    valley runs along the viewing ray, which an axis-aligned grid can only
    follow in coarse diagonal steps.
    """
    if dist is None:
        dist = edge_distance_map(image, edge_threshold)
    fine = model_samples(model, prior, camera, 0.5)
    coarse = model_samples(model, prior, camera, coarse_spacing_px)

    half = [float(r) for r in ranges]
    step = [float(x) for x in steps]
    center = prior.position.copy()
    yaw0 = float(prior.yaw_deg)
    bounds = (np.r_[center, yaw0] - np.array(half), np.r_[center, yaw0] + np.array(half))
    n_poses = np.prod([len(_axis_values(h, s)) for h, s in zip(half, step)])
    base = prior.base_rotation

    if prescan and n_poses > prescan_min_poses:
        wide = [2.0 * x for x in step]
        grid, yaws, scores = _grid_scores(
            dist, camera, model_samples(model, prior, camera, 2.0 * coarse_spacing_px), base,
            center, yaw0, half, wide, bounds, use_shift, 2.0 * tolerance_px, bilinear=False)
        seeds = _prescan_seeds(scores, grid, yaws, wide, int(prescan))
        found = [_descend(dist, camera, coarse, fine, base, p, y, wide, step, bounds, refinements,
                          use_shift, tolerance_px) for p, y in seeds]
        # highest rank wins; equal ranks go to the lexicographically smallest pose
        best_pos, best_yaw, _ = min(found, key=lambda f: (-f[2], *f[0], f[1]))
    else:
        best_pos, best_yaw, _ = _descend(dist, camera, coarse, fine, base, center, yaw0, half, step,
                                         bounds, refinements, use_shift, tolerance_px)

    R = base @ rot_z(math.radians(best_yaw))
    if polish:
        best_pos = _polish_range(dist, camera, fine, R, best_pos, step, refinements, use_shift,
                                 tolerance_px)
    _, frac = score_poses(dist, camera, fine, R, best_pos[None, :], use_shift, tolerance_px)
    similarity = float(frac[0])
    if similarity < detect_threshold:
        raise NotDetected(f"best similarity {similarity:.3f} below {detect_threshold}")
    return PoseHypothesis(best_pos, best_yaw, similarity, base)
