"""Ray-cast renderer of pallet, cargo and panel scenes through the fisheye model.

Scenes are unions of oriented boxes, flat-shaded per face orientation over a
uniform background. Pixels straddling a face boundary are re-rendered with
``supersample x supersample`` sub-rays so edges are anti-aliased.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .errors import NothingVisible
from .geometry import CameraModel, RigidTransform, pitch_yaw_rotation, pixel_to_ray, project_points
from .specs import CargoBox, PalletSpec, PanelSpec, box_corners

BACKGROUND = 30.0
OUTSIDE_FIELD = 0.0

# face order: -x, +x, -y, +y, -z, +z
PALLET_SHADES = (120.0, 90.0, 170.0, 170.0, 70.0, 200.0)
CARGO_SHADES = (215.0, 150.0, 180.0, 180.0, 100.0, 240.0)
PANEL_SHADES = (150.0, 150.0, 150.0, 150.0, 150.0, 230.0)
WALL_SHADES = (40.0, 190.0)

# camera at the top centre of the backrest, looking along the forks
DEFAULT_CAMERA_IN_FORK = (-1255.0, 0.0, 1060.0)


def scenario_camera_to_fork(position=DEFAULT_CAMERA_IN_FORK, roll_deg: float = 0.0,
                            pitch_deg: float = 0.0, yaw_deg: float = 0.0) -> RigidTransform:
    """Camera-to-fork transform for a camera at ``position`` (fork frame).

    ``pitch_deg`` > 0 tilts the optical axis up; angles describe the camera
    attitude in the fork frame.
    """
    R_cam_in_fork = pitch_yaw_rotation(yaw_deg, pitch_deg) @ _rot_x_deg(roll_deg)
    return RigidTransform(R_cam_in_fork, np.asarray(position, dtype=float), "camera", "fork")


def _rot_x_deg(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass(frozen=True, eq=False)
class Box:
    """Oriented box: local coordinates ``q = R^T (p - center)`` lie in ``[-half, half]``."""

    center: np.ndarray
    rotation: np.ndarray
    half: np.ndarray
    shades: tuple
    stripe_period: float = 0.0


def _box_from_corners(lo, hi, pose: RigidTransform, shades, stripe_period=0.0) -> Box:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    center = pose.apply_points((lo + hi) / 2)
    return Box(center, pose.rotation, (hi - lo) / 2, tuple(shades), stripe_period)


@dataclass
class SyntheticScene:
    """Ground-truth placement; all poses are in the fork frame.

    ``pallet_position`` is the pallet front-face centre (slot mid-height).
    A scene with ``panel`` set renders the calibration panel lying on the
    forks instead of a pallet.
    """

    camera_to_fork: RigidTransform = field(default_factory=scenario_camera_to_fork)
    pallet: PalletSpec | None = field(default_factory=PalletSpec)
    pallet_position: tuple = (201.0, 0.0, 355.0)
    pallet_yaw_deg: float = 0.0
    pallet_pitch_deg: float = 0.0
    loaded: bool = False
    panel: PanelSpec | None = None
    background: str = "uniform"
    use_shift: bool = False
    noise_sigma: float = 0.0
    seed: int = 0
    supersample: int = 4

    def __post_init__(self):
        if self.background not in ("uniform", "stripes"):
            raise ValueError("background must be 'uniform' or 'stripes'")
        if self.panel is None and self.pallet is None:
            raise ValueError("scene needs a pallet or a panel")
        if self.panel is None:
            cam = self.camera_to_fork.inverse().apply_points(np.asarray(self.pallet_position, float))
            if cam[0] <= 0:
                raise ValueError("pallet must be in front of the camera")

    @property
    def pallet_to_fork(self) -> RigidTransform:
        R = pitch_yaw_rotation(self.pallet_yaw_deg, self.pallet_pitch_deg)
        return RigidTransform(R, np.asarray(self.pallet_position, dtype=float), "pallet", "fork")

    @property
    def panel_to_fork(self) -> RigidTransform:
        return RigidTransform(np.eye(3), -np.asarray(self.panel.offset), "panel", "fork")

    def fork_to_camera(self) -> RigidTransform:
        return self.camera_to_fork.inverse()

    def boxes(self) -> list:
        to_cam = self.fork_to_camera()
        out = []
        if self.panel is not None:
            p = self.panel
            pose = to_cam.compose(self.panel_to_fork)
            out.append(_box_from_corners((-p.height / 2, -p.width / 2, -p.thickness),
                                         (p.height / 2, p.width / 2, 0.0), pose, PANEL_SHADES))
            return out
        pose = to_cam.compose(self.pallet_to_fork)
        for lo, hi in self.pallet.boxes():
            out.append(_box_from_corners(lo, hi, pose, PALLET_SHADES))
        if self.loaded:
            lo, hi = self.pallet.cargo_box()
            out.append(_box_from_corners(lo, hi, pose, CARGO_SHADES))
        if self.background == "stripes":
            # wall facing the forklift behind the pallet, striped along fork Y
            x0 = self.pallet_position[0] + self.pallet.depth + 1500.0
            floor = self.pallet_position[2] - self.pallet.height / 2
            wall = RigidTransform(np.eye(3), np.zeros(3), "fork", "fork")
            out.append(_box_from_corners((x0, -2500.0, floor), (x0 + 50.0, 2500.0, floor + 2500.0),
                                         to_cam.compose(wall), (WALL_SHADES[0],) * 6, stripe_period=80.0))
        return out

    def edge_endpoints(self) -> dict:
        """Named 3D segments (camera frame) used as prediction and verification targets."""
        to_cam = self.fork_to_camera()
        if self.panel is not None:
            p = self.panel
            pose = to_cam.compose(self.panel_to_fork)
            h, w = p.height / 2, p.width / 2
            segs = {
                "panel_left": ((-h, w, 0), (h, w, 0)), "panel_right": ((-h, -w, 0), (h, -w, 0)),
                "panel_front": ((h, -w, 0), (h, w, 0)), "panel_rear": ((-h, -w, 0), (-h, w, 0)),
            }
        else:
            s = self.pallet
            pose = to_cam.compose(self.pallet_to_fork)
            W, H, D = s.width / 2, s.height / 2, s.depth
            segs = {
                "face_top": ((0, -W, H), (0, W, H)), "face_bottom": ((0, -W, -H), (0, W, -H)),
                "face_left": ((0, W, -H), (0, W, H)), "face_right": ((0, -W, -H), (0, -W, H)),
                "top_left": ((0, W, H), (D, W, H)), "top_right": ((0, -W, H), (D, -W, H)),
            }
            if self.loaded:
                c = s.cargo if s.cargo is not None else CargoBox()
                segs["cargo_left"] = ((0, c.width / 2, H), (0, c.width / 2, H + c.height))
                segs["cargo_right"] = ((0, -c.width / 2, H), (0, -c.width / 2, H + c.height))
        return {k: pose.apply_points(np.asarray(v, dtype=float)).tolist() for k, v in segs.items()}

    def truth(self) -> dict:
        d = {
            "camera_to_fork": self.camera_to_fork.to_dict(),
            "loaded": bool(self.loaded),
            "use_shift": bool(self.use_shift),
            "edge_endpoints_3d": self.edge_endpoints(),
        }
        if self.panel is None:
            x, y, z = (float(v) for v in self.pallet_position)
            d["pallet_pose_fork"] = {"x_mm": x, "y_mm": y, "z_mm": z,
                                     "yaw_deg": float(self.pallet_yaw_deg),
                                     "pitch_deg": float(self.pallet_pitch_deg)}
        else:
            panel_cam = self.fork_to_camera().compose(self.panel_to_fork)
            d["panel_pose_camera"] = {"position_mm": panel_cam.translation.tolist(),
                                      "rotation": panel_cam.rotation.tolist()}
        return d

    # -- scene files -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "camera_to_fork": self.camera_to_fork.to_dict(),
            "background": self.background, "use_shift": self.use_shift,
            "noise_sigma": self.noise_sigma, "seed": self.seed, "supersample": self.supersample,
        }
        if self.panel is not None:
            d["panel"] = self.panel.to_dict()
        else:
            d["pallet"] = self.pallet.to_dict()
            d["loaded"] = self.loaded
            x, y, z = self.pallet_position
            d["pallet_pose_fork"] = {"x_mm": x, "y_mm": y, "z_mm": z,
                                     "yaw_deg": self.pallet_yaw_deg, "pitch_deg": self.pallet_pitch_deg}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticScene":
        kw = dict(
            background=d.get("background", "uniform"), use_shift=bool(d.get("use_shift", False)),
            noise_sigma=float(d.get("noise_sigma", 0.0)), seed=int(d.get("seed", 0)),
            supersample=int(d.get("supersample", 4)),
        )
        if "camera_to_fork" in d:
            kw["camera_to_fork"] = RigidTransform.from_dict(d["camera_to_fork"])
        if "panel" in d:
            return cls(pallet=None, panel=PanelSpec.from_dict(d["panel"]), **kw)
        pose = d.get("pallet_pose_fork", {})
        return cls(
            pallet=PalletSpec.from_dict(d.get("pallet", {})),
            pallet_position=(float(pose.get("x_mm", 201.0)), float(pose.get("y_mm", 0.0)),
                             float(pose.get("z_mm", 355.0))),
            pallet_yaw_deg=float(pose.get("yaw_deg", 0.0)),
            pallet_pitch_deg=float(pose.get("pitch_deg", 0.0)),
            loaded=bool(d.get("loaded", False)), **kw,
        )


@lru_cache(maxsize=2)
def _pixel_rays(camera: CameraModel):
    vv, uu = np.mgrid[0:camera.height, 0:camera.width].astype(float)
    pix = np.stack([uu.ravel(), vv.ravel()], axis=-1)
    _, dirs = pixel_to_ray(camera, pix, strict=False)
    return dirs.astype(np.float32)


def _trace(boxes, origins_x, dirs):
    """Intensity and a face label for each ray (label -1: background)."""
    n = len(dirs)
    t_best = np.full(n, np.inf)
    shade = np.full(n, BACKGROUND)
    label = np.full(n, -1, dtype=np.int64)
    good = np.all(np.isfinite(dirs), axis=1)
    for bi, box in enumerate(boxes):
        # cull rays outside the cone around the box's bounding sphere
        rad = float(np.linalg.norm(box.half)) + 1.0
        to_c = box.center
        dist_c = float(np.linalg.norm(to_c))
        idx = np.nonzero(good)[0]
        if dist_c > rad + 50.0:
            cosang = (dirs[idx] @ to_c) / dist_c
            lim = math.cos(min(math.pi, math.asin(min(1.0, rad / dist_c)) + 0.02))
            idx = idx[cosang >= lim]
        if len(idx) == 0:
            continue
        o = np.zeros((len(idx), 3))
        if origins_x is not None:
            o[:, 0] = origins_x[idx]
        d = dirs[idx].astype(float)
        ol = (o - box.center) @ box.rotation
        dl = d @ box.rotation
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dl
            t1 = (-box.half - ol) * inv
            t2 = (box.half - ol) * inv
        tmin = np.fmin(t1, t2)
        tmax = np.fmax(t1, t2)
        # rays parallel to a slab: inside -> unbounded, outside -> miss
        par = dl == 0
        inside_slab = np.abs(ol) <= box.half
        tmin = np.where(par, np.where(inside_slab, -np.inf, np.inf), tmin)
        tmax = np.where(par, np.where(inside_slab, np.inf, -np.inf), tmax)
        t_near = tmin.max(axis=1)
        t_far = tmax.min(axis=1)
        hit = (t_near <= t_far) & (t_near > 0) & (t_near < t_best[idx])
        if not np.any(hit):
            continue
        h = idx[hit]
        axis = tmin[hit].argmax(axis=1)
        sign_pos = dl[hit, axis] < 0  # entering through the + face
        face = 2 * axis + sign_pos.astype(int)
        vals = np.asarray(box.shades)[face]
        lab = bi * 6 + face
        if box.stripe_period > 0:
            hit_local = ol[hit] + t_near[hit][:, None] * dl[hit]
            k = np.floor(hit_local[:, 1] / box.stripe_period).astype(np.int64)
            vals = np.where(k % 2 == 0, WALL_SHADES[0], WALL_SHADES[1])
            lab = 10_000 + k
        t_best[h] = t_near[hit]
        shade[h] = vals
        label[h] = lab
    shade[~good] = OUTSIDE_FIELD
    label[~good] = -2
    return shade, label


def render_scene(scene: SyntheticScene, camera: CameraModel):
    """Render ``scene`` and return ``(uint8 image, truth dict)``. Deterministic."""
    boxes = scene.boxes()
    H, W = camera.height, camera.width
    dirs = _pixel_rays(camera)
    shift_x = None
    use_shift = scene.use_shift and camera.shift_curve is not None
    if use_shift:
        theta = np.arctan2(np.hypot(dirs[:, 1], dirs[:, 2]), dirs[:, 0])
        shift_x = camera.shift_curve.offset(theta.astype(float))
    shade, label = _trace(boxes, shift_x, dirs)
    label = label.reshape(H, W)
    if not np.any(label >= 0):
        raise NothingVisible("no scene geometry in the field of view")
    img = shade.reshape(H, W)

    ss = int(scene.supersample)
    if ss > 1:
        boundary = np.zeros((H, W), dtype=bool)
        boundary[:, 1:] |= label[:, 1:] != label[:, :-1]
        boundary[:, :-1] |= label[:, 1:] != label[:, :-1]
        boundary[1:, :] |= label[1:, :] != label[:-1, :]
        boundary[:-1, :] |= label[1:, :] != label[:-1, :]
        boundary = ndimage.binary_dilation(boundary)
        vs, us = np.nonzero(boundary)
        offs = (np.arange(ss) + 0.5) / ss - 0.5
        ou, ov = np.meshgrid(offs, offs)
        su = (us[:, None] + ou.ravel()[None, :]).ravel()
        sv = (vs[:, None] + ov.ravel()[None, :]).ravel()
        origin, sdirs = pixel_to_ray(camera, np.stack([su, sv], axis=-1), use_shift=use_shift,
                                     strict=False)
        sshade, _ = _trace(boxes, origin[:, 0] if use_shift else None, sdirs)
        img[vs, us] = sshade.reshape(-1, ss * ss).mean(axis=1)

    if scene.noise_sigma > 0:
        rng = np.random.default_rng(scene.seed)
        img = img + rng.normal(0.0, scene.noise_sigma, img.shape)
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return out, scene.truth()


def project_truth_endpoints(truth: dict, camera: CameraModel, use_shift: bool = False) -> dict:
    """Pixel positions of the truth segments' endpoints."""
    out = {}
    for name, seg in truth["edge_endpoints_3d"].items():
        u, v = project_points(camera, np.asarray(seg), use_shift=use_shift)
        out[name] = np.stack([u, v], axis=-1)
    return out


def box_corners_camera(scene: SyntheticScene) -> np.ndarray:
    return np.concatenate([
        b.center + (box_corners(-b.half, b.half) @ b.rotation.T) for b in scene.boxes()
    ])
